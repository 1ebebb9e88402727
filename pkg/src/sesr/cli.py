"""Command-line entry point: ``sesr {build,collapse,inspect,infer,eval,cost,train-toy}``.

Machine output is JSON (one object, or JSON lines for ``eval``); loss traces
are CSV. Failures print one JSON line ``{"error": ..., "message": ...}`` on
stderr and exit with status 1. Every output file is written to a temporary
name and renamed into place only on success.
"""
from __future__ import annotations

import argparse
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import cost, data, weightfile
from .collapse import collapse_network
from .evaluate import (ImagePlane, bicubic_resize, measure, read_png_y, upscale_plane, write_png_y)
from .graph import COLLAPSED, TRAINING, NetworkSpec, build_inference_graph, build_training_graph
from .train import TrainConfig, train_toy

log = logging.getLogger("sesr")

VARIANT_FLAGS = {
    "relu": ("activation", "relu"),
    "no-input-residual": ("use_input_residual", False),
    "no-short-res": ("use_short_residuals", False),
    "no-linear-blocks": ("use_linear_blocks", False),
    "bias": ("bias", True),
}


class CLIError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def parse_spec(text: str | None, variant: str | None) -> NetworkSpec:
    fields: dict = {}
    for item in filter(None, (text or "").split(",")):
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or key not in ("f", "m", "scale", "p"):
            raise CLIError("bad_spec", f"expected f=..,m=..,scale=..,p=.., got {item!r}")
        try:
            fields[key] = int(value)
        except ValueError:
            raise CLIError("bad_spec", f"{key} must be an integer, got {value!r}") from None
    for flag in filter(None, (variant or "").split(",")):
        if flag.strip() not in VARIANT_FLAGS:
            raise CLIError("bad_variant", f"unknown variant {flag!r}; choose from {', '.join(VARIANT_FLAGS)}")
        key, value = VARIANT_FLAGS[flag.strip()]
        fields[key] = value
    try:
        return NetworkSpec(**fields)
    except ValueError as e:
        raise CLIError("bad_spec", str(e)) from None


def parse_dims(text: str, what: str) -> tuple[int, int]:
    """'WxH' -> (height, width)."""
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise CLIError("bad_argument", f"{what} must look like WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise CLIError("bad_argument", f"{what} must be positive, got {text!r}")
    return h, w


def atomic_write(path, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _need_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CLIError("not_found", f"no such file: {p}")
    return p


def _need_out(path) -> Path:
    p = Path(path)
    if not p.parent.resolve().is_dir():
        raise CLIError("bad_path", f"output directory does not exist: {p.parent}")
    return p


def _load(path):
    try:
        return weightfile.load(_need_file(path))
    except weightfile.WeightFileError as e:
        raise CLIError("bad_weights", str(e)) from None


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, sort_keys=False) + "\n"
    if out:
        atomic_write(out, text.encode())
    else:
        sys.stdout.write(text)


def cmd_build(args) -> None:
    spec = parse_spec(args.spec, args.variant)
    out = _need_out(args.out)
    _, weights = build_training_graph(spec, args.seed)
    weightfile.save(out, spec, TRAINING, weights)
    _emit({"path": str(out), "form": TRAINING, "tensors": len(weights)}, None)


def cmd_collapse(args) -> None:
    out = _need_out(args.out)
    spec, form, weights = _load(args.weights)
    if form != TRAINING:
        raise CLIError("wrong_form", "weights are already collapsed")
    graph, _ = build_training_graph(spec, 0)
    try:
        collapsed = collapse_network(graph, weights)
    except (KeyError, ValueError) as e:
        raise CLIError("bad_weights", str(e)) from None
    weightfile.save(out, spec, COLLAPSED, collapsed)
    conv_elems = sum(v.size for k, v in collapsed.items() if k.endswith(".kernel"))
    _emit({"path": str(out), "form": COLLAPSED, "conv_weight_elements": conv_elems,
           "params": cost.count_params(spec)}, None)


def cmd_inspect(args) -> None:
    spec, form, weights = _load(args.weights)
    graph = build_training_graph(spec, 0)[0] if form == TRAINING else build_inference_graph(spec)
    expected = graph.weight_shapes()
    problems = [f"missing {n}" for n in expected if n not in weights]
    problems += [f"unexpected {n}" for n in weights if n not in expected]
    problems += [f"{n} has shape {list(weights[n].shape)}, expected {list(s)}"
                 for n, s in expected.items() if n in weights and weights[n].shape != s]
    _emit({
        "spec": {"f": spec.f, "m": spec.m, "scale": spec.scale, "p": spec.p,
                 "use_linear_blocks": spec.use_linear_blocks,
                 "use_short_residuals": spec.use_short_residuals,
                 "use_input_residual": spec.use_input_residual,
                 "activation": spec.activation, "bias": spec.bias},
        "form": form,
        "tensors": {n: list(v.shape) for n, v in weights.items()},
        "audit": problems or "ok",
    }, None)
    if problems:
        raise CLIError("audit_failed", "; ".join(problems))


def _collapsed_model(path):
    spec, form, weights = _load(path)
    if form != COLLAPSED:
        raise CLIError("wrong_form", "weights are in training form; collapse first")
    graph = build_inference_graph(spec)
    try:
        graph.check_weights(weights)
    except (KeyError, ValueError) as e:
        raise CLIError("bad_weights", str(e)) from None
    return spec, graph, weights


def cmd_infer(args) -> None:
    _need_file(args.input)
    out = _need_out(args.output)
    tile = parse_dims(args.tile, "--tile") if args.tile else None
    spec, graph, weights = _collapsed_model(args.weights)
    plane = read_png_y(args.input)
    try:
        result = upscale_plane(graph, weights, plane, tile)
    except ValueError as e:
        raise CLIError("bad_argument", str(e)) from None
    buf = io.BytesIO()
    write_png_y(buf, result)
    atomic_write(out, buf.getvalue())
    _emit({"path": str(out), "height": result.height, "width": result.width}, None)


def cmd_eval(args) -> None:
    if not Path(args.data).is_dir():
        raise CLIError("not_found", f"no such directory: {args.data}")
    if args.out:
        _need_out(args.out)
    if args.bicubic:
        if not args.scale:
            raise CLIError("bad_argument", "--bicubic needs --scale")
        scale, model = args.scale, None
    else:
        if not args.weights:
            raise CLIError("bad_argument", "give --weights or --bicubic")
        spec, graph, weights = _collapsed_model(args.weights)
        scale, model = spec.scale, (graph, weights)
    tile = parse_dims(args.tile, "--tile") if args.tile else None
    shave = scale if args.shave is None else args.shave
    lines = []
    for name, lr, hr in data.png_pairs(args.data, scale):
        if model is None:
            pred = bicubic_resize(lr, scale, "up")
            pred = ImagePlane(np.clip(pred.samples, 0, 255))
        else:
            pred = upscale_plane(model[0], model[1], lr, tile)
        if pred.samples.shape != hr.samples.shape:
            raise CLIError("size_mismatch", f"{name}: prediction {pred.samples.shape} vs reference {hr.samples.shape}")
        mp = measure(pred, hr, shave)
        lines.append({"image": name, "psnr": mp.psnr if math.isfinite(mp.psnr) else "inf", "ssim": mp.ssim})
    text = "".join(json.dumps(rec) + "\n" for rec in lines)
    if args.out:
        atomic_write(args.out, text.encode())
    else:
        sys.stdout.write(text)


def cmd_cost(args) -> None:
    if args.weights:
        spec = _load(args.weights)[0]
    else:
        spec = parse_spec(args.spec, args.variant)
    h, w = parse_dims(args.resolution, "--resolution")
    report = cost.cost_report(spec, h, w).to_dict()
    report["traffic_proxy_elems"] = cost.estimate_activation_traffic(spec, h, w)
    report["traffic_proxy_label"] = cost.TRAFFIC_LABEL
    if args.tile:
        th, tw = parse_dims(args.tile, "--tile")
        try:
            plan = cost.plan_tiles(spec, h, w, th, tw, args.overlap.replace("-", "_"))
        except ValueError as e:
            raise CLIError("bad_argument", str(e)) from None
        report["tile_plan"] = plan.to_dict()
    _emit(report, args.out)


def cmd_train_toy(args) -> None:
    spec = parse_spec(args.spec, args.variant)
    out = _need_out(args.out)
    if args.trace:
        _need_out(args.trace)
    if args.data:
        if not Path(args.data).is_dir():
            raise CLIError("not_found", f"no such directory: {args.data}")
        pairs = [(lr.samples / 255.0, hr.samples / 255.0) for _, lr, hr in data.png_pairs(args.data, spec.scale)]
    elif args.synthetic == "nearest":
        pairs = data.nearest_neighbor_pairs(8, 32, spec.scale, args.seed)
    else:
        pairs = data.bicubic_pairs(8, 32 * spec.scale, spec.scale, args.seed, args.synthetic)
    try:
        config = TrainConfig(lr=args.lr, batch_size=args.batch, steps=args.steps,
                             crop_size=args.crop, seed=args.seed)
        weights, trace = train_toy(spec, config, pairs)
    except ValueError as e:
        raise CLIError("bad_argument", str(e)) from None
    weightfile.save(out, spec, TRAINING, weights)
    if args.trace:
        rows = "step,loss\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(trace))
        atomic_write(args.trace, rows.encode())
    _emit({"path": str(out), "steps": len(trace), "final_loss": trace[-1] if trace else None}, None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sesr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def spec_args(p):
        p.add_argument("--spec", default="", help="f=..,m=..,scale=..,p=.. (defaults f=16,m=5,scale=2,p=256)")
        p.add_argument("--variant", default="", help="comma list of: " + ", ".join(VARIANT_FLAGS))

    p = sub.add_parser("build", help="write freshly initialized training-form weights")
    spec_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("collapse", help="collapse training-form weights for inference")
    p.add_argument("weights")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_collapse)

    p = sub.add_parser("inspect", help="print the header and audit tensor shapes")
    p.add_argument("weights")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("infer", help="super-resolve the luma of a PNG")
    p.add_argument("weights")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--tile", help="low-res tile size WxH")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="PSNR/SSIM over a directory of PNGs, as JSON lines")
    p.add_argument("data", help="directory with hr/ (and optionally lr/) PNGs, or PNGs directly")
    p.add_argument("--weights")
    p.add_argument("--bicubic", action="store_true", help="score the bicubic baseline instead")
    p.add_argument("--scale", type=int, choices=(2, 4))
    p.add_argument("--shave", type=int, help="border to ignore (default: the scale factor)")
    p.add_argument("--tile", help="low-res tile size WxH")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cost", help="parameter/MAC/tiling report as JSON")
    spec_args(p)
    p.add_argument("--weights", help="read the spec from a weight file instead")
    p.add_argument("--resolution", default="640x360", help="low-res input WxH")
    p.add_argument("--tile", help="low-res tile size WxH")
    p.add_argument("--overlap", choices=("none", "receptive-field"), default="none")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("train-toy", help="desk-scale training run")
    spec_args(p)
    p.add_argument("--data", help="PNG directory (see eval); default is a synthetic set")
    p.add_argument("--synthetic", choices=("nearest", "texture", "cartoon", "binary"), default="texture")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--crop", type=int, default=16, help="low-res crop size")
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="write the per-step loss as CSV")
    p.set_defaults(func=cmd_train_toy)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CLIError as e:
        sys.stderr.write(json.dumps({"error": e.kind, "message": str(e)}) + "\n")
        return 1
    except OSError as e:
        sys.stderr.write(json.dumps({"error": "io", "message": str(e)}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
