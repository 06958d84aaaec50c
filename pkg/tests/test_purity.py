from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pauliqcnn.circuits import build_qcnn
from pauliqcnn.purity import (
    A_COEFF,
    PurityDistribution,
    haar_unitary,
    pauli_weight_masses,
    pgate_apply,
    purities_mc,
    purities_network,
    purities_recursive,
)

from conftest import pauli_matrix


def test_pgate_action():
    assert pgate_apply({0b01: Fraction(1)}, 0, 1) == {0: Fraction(2, 5), 0b11: Fraction(2, 5)}
    assert pgate_apply({0b10: Fraction(1)}, 0, 1) == {0: Fraction(2, 5), 0b11: Fraction(2, 5)}
    assert pgate_apply({0: Fraction(1)}, 0, 1) == {0: Fraction(1)}
    assert pgate_apply({0b11: Fraction(1)}, 0, 1) == {0b11: Fraction(1)}
    assert A_COEFF == Fraction(2, 5)
    with pytest.raises(ValueError):
        pgate_apply({}, 1, 1)


def test_single_block_values():
    _, layout = build_qcnn(2, "non-crossing")
    for dist in (purities_network(layout), purities_recursive(1)):
        assert dist.values[1] == 0.4 and dist.values[2] == 0.6 and dist.values[0] == 0.0


def test_no_blocks_is_delta():
    _, layout = build_qcnn(4, "non-crossing")
    dist = purities_network(layout, blocks=[])
    assert dist.values[1] == 1.0 and all(v == 0 for k, v in dist.values.items() if k != 1)
    mc = purities_mc(layout, 4, 0, blocks=[])
    assert mc.values[1] == pytest.approx(1.0) and mc.stderr[1] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("L", [1, 2, 3, 4])
def test_network_equals_recursion(L):
    _, layout = build_qcnn(2**L, "non-crossing")
    assert purities_network(layout).values == purities_recursive(L).values


@pytest.mark.parametrize("L", [1, 3, 5, 7])
def test_conservation_and_nonnegativity(L):
    d = purities_recursive(L)
    assert abs(d.total() - 1.0) < 1e-9
    assert all(v >= -1e-15 for v in d.values.values())


def test_per_pauli_decay():
    per = purities_recursive(7).per_pauli()
    tail = [per[k] for k in range(2, 20)]
    assert all(a > b for a, b in zip(tail, tail[1:]))


def test_mc_brackets_single_block():
    _, layout = build_qcnn(2, "non-crossing")
    mc = purities_mc(layout, 10_000, 3)
    assert abs(mc.values[1] - 0.4) < 3 * mc.stderr[1]
    assert abs(mc.values[2] - 0.6) < 3 * mc.stderr[2]


def test_mc_agrees_with_network_n8():
    _, layout = build_qcnn(8, "non-crossing")
    exact = purities_network(layout)
    mc = purities_mc(layout, 400, 5)
    for k in range(1, 9):
        assert abs(mc.values[k] - exact.values[k]) < 3 * mc.stderr[k] + 1e-9


def test_mc_limits():
    _, layout = build_qcnn(16, "non-crossing")
    with pytest.raises(ValueError):
        purities_mc(layout, 10, 0)
    with pytest.raises(ValueError):
        purities_recursive(0)


def test_haar_unitary_is_unitary(rng):
    u = haar_unitary(4, rng)
    assert np.allclose(u.conj().T @ u, np.eye(4))


@given(st.text("IXYZ", min_size=1, max_size=4))
def test_weight_masses_of_pauli(label):
    masses = pauli_weight_masses(pauli_matrix(label), len(label))
    w = sum(ch != "I" for ch in label)
    assert masses[w] == pytest.approx(1.0) and masses.sum() == pytest.approx(1.0)


def test_csv_round_trip(tmp_path):
    d = purities_recursive(3)
    d.to_csv(tmp_path / "p.csv")
    back = PurityDistribution.from_csv(tmp_path / "p.csv", d.n)
    assert back.values == d.values and back.method == "recursive"
