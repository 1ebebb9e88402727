"""Closed-form parameter, MAC, activation and tiling arithmetic for collapsed SESR networks.

Only convolution multiplies count: activations, residual adds and the
depth-to-space shuffle are free, and biases are not counted as parameters.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from .graph import NetworkSpec

TRAFFIC_LABEL = "heuristic traffic proxy (activation elements, not DRAM bytes)"


@dataclass
class CostReport:
    params: int
    macs: int
    lr_h: int
    lr_w: int
    per_layer: list[dict] = field(default_factory=list)
    peak_activation_elems: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["macs_human"] = human(self.macs)
        d["params_human"] = human(self.params)
        return d


@dataclass
class TilePlan:
    frame_h: int
    frame_w: int
    tile_h: int
    tile_w: int
    overlap: int
    tiles_exact: float
    tiles_ceil: int
    per_tile_macs: int
    total_macs: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_tile_macs_human"] = human(self.per_tile_macs)
        d["total_macs_human"] = human(self.total_macs)
        return d


def human(n: float) -> str:
    """Three significant figures with a K/M/G/T suffix, e.g. 28037376000 -> '28.0G'."""
    for div, suffix in ((1e12, "T"), (1e9, "G"), (1e6, "M"), (1e3, "K")):
        if abs(n) >= div:
            v = n / div
            digits = max(0, 2 - int(math.floor(math.log10(abs(v)))))
            return f"{v:.{digits}f}{suffix}"
    return str(n)


def layer_params(spec: NetworkSpec) -> list[tuple[str, int]]:
    return [(name, k * k * cin * cout) for name, k, cin, cout in spec.conv_layout()]


def count_params(spec: NetworkSpec) -> int:
    """(5*5*1*f) + m*(3*3*f*f) + (5*5*f*scale^2), scale^2 being 4 for x2 and 16 for x4."""
    return sum(p for _, p in layer_params(spec))


def count_macs(spec: NetworkSpec, lr_h: int, lr_w: int) -> int:
    """Every convolution runs at low-resolution size, so MACs = H * W * params."""
    if lr_h < 1 or lr_w < 1:
        raise ValueError("resolution must be positive")
    return lr_h * lr_w * count_params(spec)


def activation_boundaries(spec: NetworkSpec, lr_h: int, lr_w: int) -> list[tuple[str, int]]:
    """Element count of every tensor crossing a layer boundary, input and output included."""
    hw = lr_h * lr_w
    out = [("input", hw)]
    out += [(name, hw * cout) for name, _, _, cout in spec.conv_layout()]
    out.append(("output", hw * spec.scale * spec.scale))
    return out


def estimate_activation_traffic(spec: NetworkSpec, lr_h: int, lr_w: int) -> int:
    """Sum of boundary tensor sizes in elements; a heuristic traffic proxy only."""
    return sum(n for _, n in activation_boundaries(spec, lr_h, lr_w))


def cost_report(spec: NetworkSpec, lr_h: int, lr_w: int) -> CostReport:
    hw = lr_h * lr_w
    per_layer = [{"name": name, "params": p, "macs": hw * p} for name, p in layer_params(spec)]
    return CostReport(
        params=sum(d["params"] for d in per_layer),
        macs=sum(d["macs"] for d in per_layer),
        lr_h=lr_h,
        lr_w=lr_w,
        per_layer=per_layer,
        peak_activation_elems=max(n for _, n in activation_boundaries(spec, lr_h, lr_w)),
    )


def plan_tiles(
    spec: NetworkSpec,
    frame_h: int,
    frame_w: int,
    tile_h: int,
    tile_w: int,
    overlap: str = "none",
) -> TilePlan:
    """Cover a low-resolution frame with tiles.

    ``overlap="receptive_field"`` grows each tile by m + 4 pixels per side
    before counting its MACs. ``tiles_exact`` is the plain area ratio;
    ``total_macs`` uses the whole number of tiles actually scheduled.
    """
    if tile_h > frame_h or tile_w > frame_w:
        raise ValueError(f"tile {tile_w}x{tile_h} larger than frame {frame_w}x{frame_h}")
    if tile_h < 1 or tile_w < 1:
        raise ValueError("tile dimensions must be positive")
    if overlap == "none":
        ov = 0
    elif overlap == "receptive_field":
        ov = spec.receptive_radius
    else:
        raise ValueError(f"unknown overlap mode {overlap!r}")
    per_tile = count_macs(spec, tile_h + 2 * ov, tile_w + 2 * ov)
    ceil_count = math.ceil(frame_w / tile_w) * math.ceil(frame_h / tile_h)
    return TilePlan(
        frame_h=frame_h,
        frame_w=frame_w,
        tile_h=tile_h,
        tile_w=tile_w,
        overlap=ov,
        tiles_exact=(frame_w / tile_w) * (frame_h / tile_h),
        tiles_ceil=ceil_count,
        per_tile_macs=per_tile,
        total_macs=per_tile * ceil_count,
    )
