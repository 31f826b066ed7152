import numpy as np
import pytest

from springrod.engine import OracleSpec, generate_dataset
from springrod.harness import koopman_comparison
from springrod.integrator import accelerations
from springrod.koopman import BLOCKS, koopman_fit, koopman_predict, koopman_step, monomials
from springrod.sysid import identify, to_params


def test_monomial_count():
    x = np.arange(6.0).reshape(2, 3)
    assert monomials(x, 2).shape == (2, 1 + 3 + 6)
    assert np.array_equal(monomials(x, 1)[:, 1:], x)


def test_blocks_basis_matches_ols(ico, ico_data):
    topo, params = ico
    train, test = ico_data[:8], ico_data[8:]
    model = koopman_fit(topo, train, degree=1, basis=BLOCKS)
    engine = to_params(topo, identify(topo, train))
    for tr in test:
        k = koopman_predict(model, topo, tr.states)
        e = accelerations(topo, engine, tr.states)
        assert np.abs(k.a - e.a).max() <= 1e-10 * np.abs(e.a).max()
        assert np.abs(k.alpha - e.alpha).max() <= 1e-10 * np.abs(e.alpha).max()


def test_empty_dataset():
    from springrod.topology import bundled_topology

    with pytest.raises(ValueError):
        koopman_fit(bundled_topology("icosahedron"), [])


def test_small_sample_koopman_not_better(ico, ico_data):
    topo, _ = ico
    res = koopman_comparison(topo, ico_data[:10], ico_data[10:], 73 / 1200, seed=0, degree=2)
    assert res["n_samples"] == 73
    assert res["koopman_one_step_mse"] >= res["engine_one_step_mse"]


def test_koopman_step_shapes(ico, ico_data):
    topo, _ = ico
    model = koopman_fit(topo, ico_data[:2], degree=2)
    out = koopman_step(model, topo, ico_data[3].states[:5])
    assert out.p.shape == (5, 6, 3) and out.is_finite()


def test_koopman_with_controls(perturbed):
    topo, _, data = perturbed
    model = koopman_fit(topo, data[:2], degree=1, basis=BLOCKS)
    tr = data[3]
    k = koopman_predict(model, topo, tr.states[:-1], tr.commands)
    target = (tr.states.v[1:] - tr.states.v[:-1]) / tr.dt
    assert np.abs(k.a - target).max() <= 1e-8 * np.abs(target).max()
