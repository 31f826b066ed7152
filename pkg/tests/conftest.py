import numpy as np
import pytest

from oracles import ACCEPTANCE
from springrod.engine import ControlSampler, OracleSpec, generate_dataset
from springrod.params import default_params
from springrod.topology import bundled_topology, simple_element


@pytest.fixture(scope="session")
def ico():
    topo = bundled_topology("icosahedron")
    return topo, default_params(topo)


@pytest.fixture(scope="session")
def ico_data(ico):
    """A small noiseless oracle dataset on the bundled icosahedron."""
    topo, params = ico
    spec = OracleSpec(topo, params, seed=11)
    return generate_dataset(spec, 12, 120)


@pytest.fixture(scope="session")
def perturbed():
    topo = bundled_topology("icosahedron_perturbed")
    params = default_params(topo)
    spec = OracleSpec(topo, params, control=ControlSampler(True, 10.0, 50), seed=5)
    return topo, params, generate_dataset(spec, 4, 300)


@pytest.fixture(scope="session")
def element():
    topo = simple_element()
    params = default_params(topo)
    data = generate_dataset(OracleSpec(topo, params, seed=2), 4, 200)
    return topo, params, data


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
