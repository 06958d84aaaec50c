"""The numba kernels and their numpy fallbacks must produce identical results."""

import os
import subprocess
import sys

import numpy as np
import pytest

from pauliqcnn import kernels
from pauliqcnn.circuits import build_qcnn, readout_observables
from pauliqcnn.kernels import HAVE_NUMBA, using_backend
from pauliqcnn.propagation import TruncationPolicy, exact_expectation, propagate, statevector_oracle
from pauliqcnn.shadows import build_feature_table, sample_shadows
from pauliqcnn.surrogate import surrogate_build

from conftest import random_state

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def _both(fn):
    with using_backend("numba"):
        a = fn()
    with using_backend("numpy"):
        b = fn()
    return a, b


@pytest.mark.parametrize("n, k", [(6, None), (6, 2), (12, 2), (40, 3)])
def test_propagate_backends_identical(n, k, rng):
    circuit, layout = build_qcnn(n)
    obs = readout_observables(layout)[0]
    theta = rng.uniform(-np.pi, np.pi, circuit.n_params)
    pol = TruncationPolicy(max_weight=k)
    a, b = _both(lambda: propagate(circuit, obs, theta, pol))
    assert np.array_equal(a.x, b.x) and np.array_equal(a.z, b.z) and np.array_equal(a.freq, b.freq)
    assert np.allclose(a.coeffs, b.coeffs, rtol=0, atol=1e-13)


@pytest.mark.parametrize("n, k", [(6, None), (16, 2), (12, 3)])
def test_surrogate_backends_identical(n, k, rng):
    circuit, layout = build_qcnn(n)
    obs = readout_observables(layout)[0]
    a, b = _both(lambda: surrogate_build(circuit, obs, TruncationPolicy(max_weight=k, min_coeff=0.0)))
    assert a.n_nodes == b.n_nodes and a.leaf_labels() == b.leaf_labels()
    for name in ("esrc", "edst", "ekind", "step_ptr", "step_param", "leaf_node", "leaf_freq"):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name
    theta = rng.uniform(-np.pi, np.pi, circuit.n_params)
    ca, cb = _both(lambda: a.leaf_coefficients(theta))
    assert np.allclose(ca, cb, rtol=0, atol=1e-13)


def test_statevector_backends(rng):
    circuit, layout = build_qcnn(6)
    psi = random_state(6, rng)
    theta = rng.uniform(-np.pi, np.pi, circuit.n_params)
    obs = readout_observables(layout)[0]
    a, b = _both(lambda: exact_expectation(statevector_oracle(circuit, theta, psi), obs))
    assert a == pytest.approx(b, abs=1e-13)


def test_shadow_backends(rng):
    psi = random_state(7, rng)
    a, b = _both(lambda: sample_shadows(psi, 300, 99))
    assert np.array_equal(a.bases, b.bases) and np.array_equal(a.bits, b.bits)
    ops = ["ZIIIIII", "XXIIIII", "IYIZIII", "IIIIIZX"]
    fa, fb = _both(lambda: build_feature_table([a], ops).values)
    assert np.allclose(fa, fb, rtol=0, atol=1e-15)


def test_environment_variable_selects_numpy():
    code = "from pauliqcnn.kernels import backend; print(backend())"
    env = dict(os.environ, PAULIQCNN_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        kernels.set_backend("cuda")
