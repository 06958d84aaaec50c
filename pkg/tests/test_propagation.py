import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pauliqcnn.circuits import Circuit, Gate, build_qcnn, readout_observables
from pauliqcnn.paulis import PauliString, PauliSum
from pauliqcnn.propagation import (
    OracleSizeError,
    PropagatedOperator,
    TruncationPolicy,
    apply_rotation_heisenberg,
    basis_state,
    exact_expectation,
    expectation_from_state,
    product_expectation,
    product_state,
    propagate,
    random_bloch,
    statevector_oracle,
)

from conftest import pauli_matrix, random_state

P = PauliString.from_label


def one_gate(label):
    return Circuit(len(label), [Gate(P(label), 0)], 1)


def test_rz_on_x():
    t = 0.3
    out = {p.label: (c, f) for p, c, f in apply_rotation_heisenberg((P("X"), 1.0, 0), Gate(P("Z"), 0), t)}
    assert out["X"][0] == pytest.approx(math.cos(t)) and out["Y"][0] == pytest.approx(math.sin(t))
    assert out["X"][1] == out["Y"][1] == 1


def test_rz_on_z_commutes():
    assert apply_rotation_heisenberg((P("Z"), 0.7, 2), Gate(P("Z"), 0), 1.1) == [(P("Z"), 0.7, 2)]


def test_xx_on_z1_and_weight_cap():
    t = 0.4
    full = {p.label: c for p, c, _ in apply_rotation_heisenberg((P("ZI"), 1.0, 0), Gate(P("XX"), 0), t)}
    # X.Z = -iY on the first site, so the sine branch carries a minus sign
    assert full["ZI"] == pytest.approx(math.cos(t)) and full["YX"] == pytest.approx(-math.sin(t))
    capped = apply_rotation_heisenberg((P("ZI"), 1.0, 0), Gate(P("XX"), 0), t, TruncationPolicy(max_weight=1))
    assert [p.label for p, _, _ in capped] == ["ZI"]


@pytest.mark.parametrize("gen", ["Z", "X", "Y", "XX", "YZ", "ZZ"])
@pytest.mark.parametrize("obs", ["X", "Y", "Z"])
def test_single_rule_matches_dense_conjugation(gen, obs):
    n = len(gen)
    obs = obs + "I" * (n - 1)
    t = 0.77
    G = pauli_matrix(gen)
    U = math.cos(t / 2) * np.eye(1 << n) + 1j * math.sin(t / 2) * G
    ref = U.conj().T @ pauli_matrix(obs) @ U
    got = sum(c * pauli_matrix(p.label) for p, c, _ in apply_rotation_heisenberg((P(obs), 1.0, 0), Gate(P(gen), 0), t))
    assert np.allclose(got, ref, atol=1e-12)


def test_empty_circuit_and_zero_angles():
    O = PauliSum.from_labels({"ZIX": 0.5, "IYI": -0.25})
    assert propagate(Circuit(3, [], 0), O, []).sum == O
    circuit, _ = build_qcnn(4)
    O4 = PauliSum.from_labels({"ZIII": 1.0})
    assert propagate(circuit, O4, np.zeros(circuit.n_params)).sum.to_labels() == {"ZIII": 1.0}


@pytest.mark.parametrize(
    "terms, bits, expected",
    [({"ZII": 1.0}, "000", 1.0), ({"XII": 1.0}, "000", 0.0), ({"ZII": 0.6, "ZZI": 0.8}, "010", -0.2)],
)
def test_expectation_examples(terms, bits, expected):
    op = propagate(Circuit(3, [], 0), PauliSum.from_labels(terms), [])
    assert expectation_from_state(op, basis_state(3, bits)) == pytest.approx(expected)


def test_oracle_examples():
    plus = np.array([1, 1], dtype=complex) / math.sqrt(2)
    assert np.allclose(statevector_oracle(Circuit(1, [], 0), [], plus), plus)
    out = statevector_oracle(one_gate("Z"), [math.pi], plus)
    assert exact_expectation(out, P("X")) == pytest.approx(-1.0)


def _check_against_oracle(n, rng):
    circuit, layout = build_qcnn(n)
    obs = readout_observables(layout)[0]
    for _ in range(5):
        theta = rng.uniform(-np.pi, np.pi, circuit.n_params)
        bloch = random_bloch(n, rng)
        ref = exact_expectation(statevector_oracle(circuit, theta, product_state(bloch)), obs)
        op = propagate(circuit, obs, theta, TruncationPolicy.exact())
        assert abs(product_expectation(op, bloch) - ref) < 1e-9
        psi = random_state(n, rng)
        assert abs(expectation_from_state(op, psi) - exact_expectation(statevector_oracle(circuit, theta, psi), obs)) < 1e-9


@pytest.mark.parametrize("n", [4, 6])
def test_untruncated_matches_oracle_each_backend(n, rng, each_backend):
    _check_against_oracle(n, rng)


def test_untruncated_matches_oracle_n8(rng):
    _check_against_oracle(8, rng)


@pytest.mark.parametrize("n", [4, 6])
def test_sparse_and_dense_modes_agree(n, rng):
    circuit, layout = build_qcnn(n)
    obs = readout_observables(layout)[0]
    theta = rng.uniform(-np.pi, np.pi, circuit.n_params)
    for k in (1, 2, 3, None):
        pol = TruncationPolicy(max_weight=k, min_coeff=0.0)
        a = propagate(circuit, obs, theta, pol)
        # a frequency cap far above any path length forces the sparse store without changing results
        b = propagate(circuit, obs, theta, TruncationPolicy(max_weight=k, max_frequency=10**6, min_coeff=0.0))
        if a.stats.get("mode") == b.stats.get("mode"):
            continue
        assert a.sum.to_labels().keys() == b.sum.to_labels().keys()
        assert np.allclose(a.coeffs, b.coeffs, atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(0, 12))
def test_truncation_invariants(seed, k, lmax):
    rng = np.random.default_rng(seed)
    circuit, layout = build_qcnn(6)
    obs = readout_observables(layout)[0]
    theta = rng.uniform(-np.pi, np.pi, circuit.n_params)
    full = propagate(circuit, obs, theta, TruncationPolicy.exact())
    assert full.squared_norm() == pytest.approx(1.0, abs=1e-9)
    cut = propagate(circuit, obs, theta, TruncationPolicy(max_weight=k, max_frequency=lmax, min_coeff=0.0))
    assert np.all(cut.weights() <= k)
    assert np.all(cut.freq <= lmax)
    assert cut.squared_norm() <= full.squared_norm() + 1e-9
    assert np.all(np.isfinite(cut.coeffs))


def test_frequency_rule_configurable(rng):
    circuit, layout = build_qcnn(4)
    obs = readout_observables(layout)[0]
    theta = rng.uniform(-np.pi, np.pi, circuit.n_params)
    lo = propagate(circuit, obs, theta, TruncationPolicy(max_frequency=8, freq_rule="min", min_coeff=0.0))
    hi = propagate(circuit, obs, theta, TruncationPolicy(max_frequency=8, freq_rule="max", min_coeff=0.0))
    assert len(hi) <= len(lo)
    with pytest.raises(ValueError):
        TruncationPolicy(freq_rule="mean")


def test_gate_order_reversal_changes_result_only_through_gates(rng):
    """Propagating a PauliSum equals the sum of propagating its terms (linearity, merge-order independence)."""
    circuit, _ = build_qcnn(4)
    theta = rng.uniform(-np.pi, np.pi, circuit.n_params)
    O = PauliSum.from_labels({"ZIII": 0.3, "IXIY": -0.7, "YZII": 0.2})
    whole = propagate(circuit, O, theta, TruncationPolicy.exact()).sum
    parts = PauliSum(4)
    for p, c in O.items():
        parts = parts + propagate(circuit, PauliSum.from_labels({p.label: c}), theta, TruncationPolicy.exact()).sum
    for p, c in parts.prune(1e-13).items():
        assert whole.coefficient(p) == pytest.approx(c, abs=1e-12)


def test_csv_round_trip(tmp_path, rng):
    circuit, layout = build_qcnn(4)
    op = propagate(circuit, readout_observables(layout)[0], rng.uniform(-1, 1, circuit.n_params))
    op.to_csv(tmp_path / "op.csv")
    back = PropagatedOperator.from_csv(tmp_path / "op.csv")
    assert np.array_equal(back.coeffs, op.coeffs) and np.array_equal(back.freq, op.freq)
    assert (tmp_path / "op.csv").read_text().splitlines()[0] == "pauli,coefficient,frequency"


def test_large_n_sparse_propagation():
    circuit, layout = build_qcnn(256)
    op = propagate(circuit, readout_observables(layout)[0], np.full(circuit.n_params, 0.1), TruncationPolicy(max_weight=2))
    assert len(op) > 0 and np.all(op.weights() <= 2)


def test_oracle_size_limit():
    with pytest.raises(OracleSizeError):
        product_state(np.tile([0.0, 0.0, 1.0], (20, 1)))


def test_theta_length_checked():
    circuit, layout = build_qcnn(4)
    with pytest.raises(ValueError):
        propagate(circuit, readout_observables(layout)[0], np.zeros(3))
