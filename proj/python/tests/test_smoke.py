import json

import numpy as np
import pytest

import advgame


def test_generate_is_deterministic():
    a = advgame.generate("circles", n=200, seed=3)
    b = advgame.generate("circles", n=200, seed=3)
    assert a.x.shape == (200, 2)
    assert a.fingerprint == b.fingerprint
    assert np.array_equal(a.x, b.x)
    assert a.x.min() >= 0.0 and a.x.max() <= 1.0
    assert len(a.train) == 160


def test_attack_output_respects_budget():
    f, lam = advgame.build_pair(2, 3, p="2", delta=0.1, seed=1)
    x = np.random.default_rng(0).uniform(size=(50, 2))
    out = lam.forward(x, [i % 3 for i in range(50)])
    assert out.shape == (50, 2)
    assert np.all(np.linalg.norm(out, axis=1) <= 0.1 * (1 + 1e-9))
    assert f.forward(x).shape == (50, 3)


def test_one_step_pgd_matches_fgsm():
    f, _ = advgame.build_pair(2, 2, seed=2)
    x = np.random.default_rng(1).uniform(size=(20, 2))
    y = [i % 2 for i in range(20)]
    a = advgame.fgsm(f, x, y, delta=0.2)
    b = advgame.pgd(f, x, y, delta=0.2, step=0.2, steps=1, restarts=1)
    assert np.array_equal(a, b)
    assert np.max(np.abs(a - x)) <= 0.2 + 1e-12


def test_alpha_endpoints():
    f, lam = advgame.build_pair(2, 2, seed=4)
    x = np.random.default_rng(2).uniform(size=(16, 2))
    y = [i % 2 for i in range(16)]
    plain = advgame.adversarial_loss(f, lam, x, y)
    assert advgame.adversarial_loss(f, lam, x, y, mix="alpha", alpha=0.0) == pytest.approx(plain, abs=1e-12)


def test_closed_form_and_flow():
    assert advgame.closed_form_attack("logistic", [1.0, -2.0, 0.0], [0.1, 0.2, 0.3], 0.0, 0.2) == [0.2, -0.2, 0.0]
    f, _ = advgame.build_pair(2, 2, seed=5)
    pert, value, _ = advgame.flow_attack(f, [0.5, 0.5], 0, p="inf", delta=0.2)
    assert max(abs(v) for v in pert) <= 0.2 + 1e-9
    assert value > 0.0


def test_errors_map_to_python():
    with pytest.raises(ValueError):
        advgame.generate("spirals")
    with pytest.raises(ValueError):
        advgame.build_pair(2, 2, p="3")


def test_tiny_reproduce(tmp_path):
    cfg = json.loads(advgame.preset_config("circles-linf"))
    cfg["dataset"]["n"] = 100
    cfg["training"]["epochs"] = 1
    cfg["pgd"]["restarts"] = 1
    cfg["pgd"]["steps"] = 2
    cfg["evaluation"]["field_resolution"] = 5
    files = advgame.reproduce(json.dumps(cfg), tmp_path / "run")
    assert "matrix.csv" in files
    assert (tmp_path / "run" / "matrix.csv").read_text().startswith("defense,attack,loss,loss_sum,error\n")
