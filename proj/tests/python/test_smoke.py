import json
import math

import numpy as np
import pytest

import mfc


def test_factors_shapes_and_identity():
    f = mfc.factorize_agent(1.0, 1.0)
    assert f.h.outputs == 2 and f.h.inputs == 2
    assert f.u.outputs == 2 and f.u.inputs == 1
    assert f.v.outputs == 1 and f.v.inputs == 2
    assert mfc.is_stable(f.h) and mfc.is_stable(f.u) and mfc.is_stable(f.v)
    q = mfc.StateSpace(np.array([[0.5]]), np.array([[1.0]]), np.array([[0.3]]), np.array([[0.1]]))
    probes = [complex(math.cos(t), -math.sin(t)) for t in np.linspace(0.1, 3.0, 7)]
    assert mfc.verify_parametrization(f, q, probes) < 1e-9


def test_norm_oracles():
    # lambda / (1 - 0.5 lambda) peaks at theta = 0 with value 2.
    s = mfc.StateSpace(np.array([[0.5]]), np.array([[1.0]]), np.array([[1.0]]), np.array([[0.0]]))
    assert mfc.hinf_norm(s)["value"] == pytest.approx(2.0, rel=1e-9)
    # H2 norm squared = sum of squared taps = 1 / (1 - 0.25).
    assert mfc.h2_norm_scaled(s)["value"] == pytest.approx(math.sqrt(4.0 / 3.0), rel=1e-9)
    assert mfc.h2_norm_scaled(s, 4)["value"] == pytest.approx(math.sqrt(4.0 / 3.0) / 2.0, rel=1e-9)
    assert mfc.sigma_max(np.diag([3.0, 1.0]).astype(complex)) == pytest.approx(3.0)


def test_matching_static_and_delay():
    one = mfc.StateSpace.gain(1.0)
    r = mfc.solve_matching(one, one, one, mfc.NormKind.Hinf, 8, True)
    assert r.cost == pytest.approx(math.sqrt(0.5), rel=1e-4)
    d = mfc.StateSpace.delay()
    r2 = mfc.solve_matching(d, one, one, mfc.NormKind.H2, 8)
    assert r2.cost < 1e-8
    assert r2.z[1] == pytest.approx(1.0)


def test_ensemble_costs():
    model = mfc.sample_population(6, 3)
    assert len(model) == 6
    q = mfc.selfish_q(model, fir_order=16)
    qa = mfc.make_alpha_dominant(q, 0.5, seed=1)
    assert mfc.check_dominance(qa, 0.5 + 1e-9)
    assert qa.off_diagonal_count == 6 * 5
    sel = mfc.social_cost(model, q)["value"]
    dom = mfc.social_cost(model, qa)["value"]
    assert sel > 0 and dom > 0
    p = mfc.averaging_projector(6)
    assert np.allclose(p @ p, p)
    avg = mfc.average_block_norm(model, qa, 1)["value"]
    b = model.bounds
    bound = mfc.lemma_bound_hinf(1, 6, b.gamma_h, qa.gamma_q, b.gamma_u, b.gamma_v, 0.5)
    assert avg <= bound


@pytest.mark.parametrize("fmt", ["text", "binary"])
def test_snapshot_round_trip(fmt):
    model = mfc.sample_population(4, 9)
    q = mfc.make_alpha_dominant(mfc.selfish_q(model, fir_order=8), 0.3, seed=2)
    data = mfc.snapshot_encode(model, q, fmt)
    m2, q2 = mfc.snapshot_decode(data)
    assert [p.a for p in m2.parameters] == [p.a for p in model.parameters]
    assert mfc.snapshot_encode(m2, q2, fmt) == data


def test_matching_driver(tmp_path):
    r = mfc.run("matching", {"output_dir": str(tmp_path), "matching": {"fir_order": 16}, "deterministic": True})
    assert r["mu"] < r["cost_zero"]
    assert all(c["passed"] for c in r["checks"])
    assert (tmp_path / "matching.csv").exists()
    manifest = json.loads((tmp_path / "matching.manifest").read_text())
    assert manifest["seed"] == 42


def test_config_rejects_unknown_key():
    with pytest.raises(ValueError):
        mfc.run_matching(json.dumps({"no_such_key": 1}))
    cfg = json.loads(mfc.default_config())
    assert cfg["seed"] == 42
