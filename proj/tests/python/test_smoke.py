import json
import math

import pytest

import nexus_growth as ng


def test_radial_energy_replays_a_published_row():
    up = ng.percent_shift(0.2010, 0.1905)
    noc = ng.percent_shift(0.9100, 0.9152)
    assert ng.radial_energy(up, noc) == pytest.approx(math.hypot(up, noc), abs=1e-15)


def test_percent_shift_rejects_zero_baseline():
    with pytest.raises(ng.ValidationError):
        ng.percent_shift(1.0, 0.0)


def test_noc_identical_is_one():
    xs = [0.1 * i for i in range(50)]
    assert ng.noc(xs, xs) == 1.0


def test_mann_whitney_small_samples_are_exact():
    u, p, exact = ng.mann_whitney([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
    assert exact
    assert u == 0.0
    assert p == pytest.approx(0.1, abs=1e-12)


def test_harmonic_fit_recovers_a_planted_period():
    t = [3.0 * i for i in range(11)]
    v = [1 + 0.3 * math.cos(2 * math.pi * x / 11) for x in t]
    fit = ng.harmonic_fit(t, v)
    assert fit["r_squared"] > 0.999
    assert abs(fit["freq"] - 1 / 11) <= fit["grid_step"]


def test_fisher_g_flags_constant_series():
    res = ng.fisher_g_test([2.0] * 11, detrend="none")
    assert res["degenerate"] is True


def test_scaling_fit_exact_data():
    pairs = [(r, math.exp(-0.0991 * abs(math.log(r)) + 2.4804)) for r in (0.05, 0.1, 0.2, 0.3)]
    fit = ng.scaling_law_fit(pairs)
    assert fit["w"] == pytest.approx(-0.0991, abs=1e-9)
    assert fit["r_squared"] == pytest.approx(1.0, abs=1e-12)


def test_grassmann_orthogonal_planes():
    a = [[1, 0], [0, 0], [0, 1]]
    b = [[0, 0], [1, 0], [0, 1]]
    assert ng.grassmann_distance(a, b) == pytest.approx(math.pi / 2, abs=1e-15)


def test_flops_model():
    assert ng.nexus_proj_flops(768, 780, 960) == 4170240
    assert ng.standard_proj_flops(768) == 1179648
    b = ng.model_flops(True, 12, 768, 32000, 2048, m=780, a=960, lm_head=False)
    assert b["total"] == 390776832
    assert ng.efficiency_ratio(10.8157, 4.256e8) == pytest.approx(2.54e-8, rel=2e-3)


def test_train_grow_verify(tmp_path):
    cfg = {
        "model": {"vocab": 64, "context": 16, "hidden": 8, "heads": 2, "layers": 1,
                  "m": 12, "a": 16, "ffn": 32},
        "schedule": {"steps": 10, "warmup": 2, "snapshot_every": 5, "batch_size": 2},
        "corpus": {"generator": "repeat-pattern", "seed": 1, "length": 2000},
        "held_out_sequences": 2,
    }
    log = ng.train(json.dumps(cfg), tmp_path / "run")
    assert [s for s, _ in log] == [0, 5, 10]
    assert all(math.isfinite(x) for _, x in log)
    report = ng.grow_checkpoint(tmp_path / "run" / "ckpt_10.nxf", tmp_path / "g.nxf", 4, 4,
                                "strict-zero", 3)
    assert report["new_m"] == 16 and report["new_a"] == 20
    assert ng.max_logit_deviation(tmp_path / "run" / "ckpt_10.nxf", tmp_path / "g.nxf") == 0.0


def test_bad_config_raises():
    with pytest.raises(ng.ValidationError):
        ng.train(json.dumps({"schedule": {"steps": 10, "snapshot_every": 3}}), "/tmp/never")
