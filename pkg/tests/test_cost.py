import math

import numpy as np
import pytest

from sesr.collapse import collapse_network
from sesr.cost import (TRAFFIC_LABEL, activation_boundaries, cost_report, count_macs, count_params,
                       estimate_activation_traffic, human, plan_tiles)
from sesr.graph import NetworkSpec, build_inference_graph, build_training_graph

from conftest import matches_printed

MODELS = {"M3": (16, 3), "M5": (16, 5), "M7": (16, 7), "M11": (16, 11), "XL": (32, 11)}
PARAMS = {
    2: {"M3": 8_912, "M5": 13_520, "M7": 18_128, "M11": 27_344, "XL": 105_376},
    4: {"M3": 13_712, "M5": 18_320, "M7": 22_928, "M11": 32_144, "XL": 114_976},
}
# table MAC columns: x2 at 640x360, x4 at 320x180 (both to 720p)
TABLE_MACS = {
    2: {"M3": "2.05G", "M5": "3.11G", "M7": "4.17G", "M11": "6.30G", "XL": "24.27G"},
    4: {"M3": "0.79G", "M5": "1.05G", "M7": "1.32G", "M11": "1.85G", "XL": "6.62G"},
}


@pytest.mark.parametrize("scale", [2, 4])
@pytest.mark.parametrize("model", list(MODELS))
def test_param_goldens(scale, model):
    f, m = MODELS[model]
    spec = NetworkSpec(f=f, m=m, scale=scale)
    assert count_params(spec) == PARAMS[scale][model]
    shapes = build_inference_graph(spec).weight_shapes()
    assert sum(int(np.prod(s)) for s in shapes.values() if len(s) == 4) == PARAMS[scale][model]


def test_param_formula_by_hand():
    f, m = 16, 5
    assert count_params(NetworkSpec(f=f, m=m)) == 5 * 5 * 1 * f + m * 3 * 3 * f * f + 5 * 5 * f * 4


def test_params_ignore_training_width_and_variants():
    base = count_params(NetworkSpec(f=16, m=5))
    assert count_params(NetworkSpec(f=16, m=5, p=8)) == base
    assert count_params(NetworkSpec(f=16, m=5, activation="relu", use_input_residual=False)) == base
    spec = NetworkSpec(f=4, m=2, p=8)
    graph, weights = build_training_graph(spec, 0)
    assert sum(v.size for k, v in collapse_network(graph, weights).items() if k.endswith(".kernel")) \
        == count_params(spec)


@pytest.mark.parametrize("scale,lr", [(2, (360, 640)), (4, (180, 320))])
@pytest.mark.parametrize("model", list(MODELS))
def test_table_macs(scale, lr, model):
    f, m = MODELS[model]
    assert matches_printed(count_macs(NetworkSpec(f=f, m=m, scale=scale), *lr), TABLE_MACS[scale][model])


def test_frame_and_tile_macs():
    x2, x4 = NetworkSpec(f=16, m=5), NetworkSpec(f=16, m=5, scale=4)
    assert count_macs(x2, 1080, 1920) == 28_035_072_000
    assert matches_printed(count_macs(x2, 1080, 1920), "28G")
    assert matches_printed(count_macs(x4, 1080, 1920), "38G")
    assert matches_printed(count_macs(x2, 300, 400), "1.62G")
    assert matches_printed(count_macs(x4, 300, 400), "2.19G")
    assert matches_printed(count_macs(x2, 360, 640), "3.11G")


def test_matches_printed_rejects_far_values():
    assert not matches_printed(3.13e9, "3.11G")
    assert not matches_printed(27.8e9, "28G")


def test_macs_linear_in_area():
    spec = NetworkSpec(f=8, m=2)
    assert count_macs(spec, 10, 20) == 200 * count_params(spec)
    assert count_macs(spec, 20, 20) == 2 * count_macs(spec, 10, 20)
    with pytest.raises(ValueError):
        count_macs(spec, 0, 5)


def test_cost_report_sums():
    report = cost_report(NetworkSpec(f=16, m=5), 360, 640)
    assert report.params == sum(d["params"] for d in report.per_layer) == 13_520
    assert report.macs == sum(d["macs"] for d in report.per_layer)
    assert [d["name"] for d in report.per_layer] == ["head"] + [f"body{i}" for i in range(1, 6)] + ["tail"]
    d = report.to_dict()
    assert d["params_human"] == "13.5K" and d["macs_human"] == "3.12G"  # 3.1151G; the table truncates to 3.11G


@pytest.mark.parametrize("n,text", [(13_520, "13.5K"), (28_035_072_000, "28.0G"), (999, "999"),
                                    (1_622_400_000, "1.62G"), (105_376, "105K")])
def test_human(n, text):
    assert human(n) == text


def test_tile_plan_1080p_400x300():
    plan = plan_tiles(NetworkSpec(f=16, m=5), 1080, 1920, 300, 400)
    assert plan.per_tile_macs == 1_622_400_000
    assert abs(plan.tiles_exact - 17.28) <= 1e-9
    assert plan.tiles_ceil == 20
    assert plan.total_macs == 20 * plan.per_tile_macs
    assert plan.to_dict()["per_tile_macs_human"] == "1.62G"


def test_tile_plan_receptive_overlap():
    spec = NetworkSpec(f=16, m=5)
    plan = plan_tiles(spec, 1080, 1920, 300, 400, overlap="receptive_field")
    assert plan.overlap == 9
    assert plan.per_tile_macs == count_macs(spec, 318, 418)
    assert plan.total_macs > plan_tiles(spec, 1080, 1920, 300, 400).total_macs


@pytest.mark.parametrize("frame,tile", [((1080, 1920), (300, 400)), ((1080, 1920), (270, 480)),
                                        ((100, 90), (33, 17)), ((64, 64), (64, 64))])
def test_ceil_tiles_cover_frame(frame, tile):
    spec = NetworkSpec(f=4, m=1)
    plan = plan_tiles(spec, *frame, *tile)
    full = count_macs(spec, *frame)
    assert plan.total_macs >= full
    divides = frame[0] % tile[0] == 0 and frame[1] % tile[1] == 0
    assert (plan.total_macs == full) == divides
    assert plan.tiles_ceil == math.ceil(frame[0] / tile[0]) * math.ceil(frame[1] / tile[1])


def test_tile_errors():
    spec = NetworkSpec(f=4, m=1)
    with pytest.raises(ValueError, match="larger"):
        plan_tiles(spec, 100, 100, 101, 50)
    with pytest.raises(ValueError):
        plan_tiles(spec, 100, 100, 50, 50, overlap="half")


def test_activation_boundaries():
    bounds = activation_boundaries(NetworkSpec(f=16, m=5), 10, 20)
    assert bounds[0] == ("input", 200) and bounds[-1] == ("output", 800)
    assert all(n == 200 * 16 for _, n in bounds[1:-2])
    assert max(n for _, n in bounds) == 200 * 16
    m0 = activation_boundaries(NetworkSpec(f=16, m=0), 10, 20)
    assert [name for name, _ in m0] == ["input", "head", "tail", "output"]


def test_traffic_proxy():
    spec = NetworkSpec(f=16, m=5)
    t = estimate_activation_traffic(spec, 10, 20)
    assert t == (1 + 16 * 6 + 4 + 4) * 200
    assert estimate_activation_traffic(spec, 20, 20) == 2 * t
    assert "not DRAM bytes" in TRAFFIC_LABEL
