import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from masc.env import EnvConfig
from masc.evaluation import baseline_policy, evaluate_policies, svg_chart, write_outputs
from masc.marnet import MarConfig, MarNet
from masc.metrics import paired_t_test


@pytest.fixture(scope="module")
def result(tiny_splits):
    env = EnvConfig()
    mar = MarNet(MarConfig(depth=2, base_channels=4), np.random.default_rng(0))
    mar.head.weight.data[:] = 0.02
    pols = [baseline_policy(k, env.total_lines, mar) for k in ("center-out", "random", "equispaced")]
    return evaluate_policies(tiny_splits["test"], pols, env, "10x", reference="center-out+mar")


def test_rows_and_reference(result):
    keys = {(r["policy"], r["mar"]) for r in result.rows}
    assert keys == {(p, f) for p in ("center-out", "random", "equispaced") for f in (0, 1)}
    ref = result.per_sample[("center-out", 1)]["ssim"]
    for r in result.rows:
        if (r["policy"], r["mar"]) == ("center-out", 1):
            assert math.isnan(r["p_ssim"])
        else:
            assert r["p_ssim"] == paired_t_test(result.per_sample[(r["policy"], r["mar"])]["ssim"], ref)[1]


def test_sample_std(result):
    r = next(r for r in result.rows if r["policy"] == "random" and r["mar"] == 0)
    v = result.per_sample[("random", 0)]["ssim"]
    assert r["ssim_std"] == pytest.approx(v.std(ddof=1))
    assert r["n"] == 4


def test_curves_start_at_initial_state(result):
    c = result.curve_samples[("center-out", 0)]
    assert c["ssim"].shape == (4, 6)
    final = result.per_sample[("center-out", 0)]["ssim"]
    np.testing.assert_allclose(c["ssim"][:, -1], final)
    # every policy shares the same initial acquisition
    np.testing.assert_allclose(result.curve_samples[("random", 0)]["ssim"][:, 0], c["ssim"][:, 0])


def test_evaluation_deterministic(tiny_splits, result):
    env = EnvConfig()
    again = evaluate_policies(tiny_splits["test"], [baseline_policy("random", env.total_lines)], env, "10x",
                              with_mar=(False,))
    np.testing.assert_array_equal(again.per_sample[("random", 0)]["ssim"], result.per_sample[("random", 0)]["ssim"])


def test_outputs_and_svg(result, tmp_path):
    paths = write_outputs(tmp_path, result)
    for key in ("svg_quality", "svg_ssim", "svg_mse"):
        root = ET.fromstring(paths[key].read_text())
        assert root.tag.endswith("svg")
        assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == 6
    assert ET.fromstring(svg_chart([], "ssim")).tag.endswith("svg")
