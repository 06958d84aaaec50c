import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pauliqcnn.paulis import (
    PauliString,
    PauliSum,
    arrays_to_strings,
    commutes,
    letter_codes,
    multiply,
    strings_to_arrays,
    sum_add,
    sum_prune,
    weight,
)

from conftest import pauli_matrix

P = PauliString.from_label


def labels(n_min=1, n_max=8):
    return st.integers(n_min, n_max).flatmap(lambda n: st.text("IXYZ", min_size=n, max_size=n))


@pytest.mark.parametrize(
    "a, b, phase, prod",
    [("Z", "X", 1j, "Y"), ("X", "X", 1, "I"), ("XZ", "ZZ", -1j, "YI"), ("X", "Y", 1j, "Z"), ("Y", "X", -1j, "Z")],
)
def test_multiply_table(a, b, phase, prod):
    got_phase, got = multiply(P(a), P(b))
    assert got_phase == phase and got.label == prod


@pytest.mark.parametrize("a, b, expected", [("XI", "ZZ", False), ("XX", "ZZ", True), ("XYZ", "III", True)])
def test_commutes_examples(a, b, expected):
    assert commutes(P(a), P(b)) is expected


@pytest.mark.parametrize("label, w", [("III", 0), ("XIZ", 2), ("YYY", 3)])
def test_weight_examples(label, w):
    assert weight(P(label)) == w == P(label).weight()


def test_sum_examples():
    a = PauliSum.from_labels({"X": 0.5})
    assert sum_add(a, PauliSum.from_labels({"X": 0.25})).to_labels() == {"X": 0.75}
    assert sum_prune(PauliSum.from_labels({"X": 1e-12, "Z": 0.3}), 1e-10).to_labels() == {"Z": 0.3}
    assert len(sum_add(a, PauliSum.from_labels({"X": -0.5}))) == 0


def test_commutes_exhaustive_two_qubits():
    for a, b in itertools.product(map("".join, itertools.product("IXYZ", repeat=2)), repeat=2):
        A, B = pauli_matrix(a), pauli_matrix(b)
        assert commutes(P(a), P(b)) == np.allclose(A @ B, B @ A)


@given(labels(1, 4), st.data())
def test_multiply_matches_dense(a, data):
    b = data.draw(st.text("IXYZ", min_size=len(a), max_size=len(a)))
    phase, prod = multiply(P(a), P(b))
    assert np.allclose(pauli_matrix(a) @ pauli_matrix(b), phase * pauli_matrix(prod.label))


@given(labels(1, 8), st.data())
def test_multiply_associative(a, data):
    n = len(a)
    b, c = (data.draw(st.text("IXYZ", min_size=n, max_size=n)) for _ in range(2))
    p1, bc = multiply(P(b), P(c))
    p2, left = multiply(P(a), bc)
    p3, ab = multiply(P(a), P(b))
    p4, right = multiply(ab, P(c))
    assert left == right and p1 * p2 == p3 * p4


@given(labels(1, 8), st.data())
def test_commutation_symmetric_and_phase_real(a, data):
    b = data.draw(st.text("IXYZ", min_size=len(a), max_size=len(a)))
    assert commutes(P(a), P(b)) == commutes(P(b), P(a))
    phase, _ = multiply(P(a), P(b))
    assert (phase.imag == 0) == commutes(P(a), P(b))


@given(st.lists(labels(3, 3), unique=True, min_size=1, max_size=10), st.lists(st.floats(-2, 2), min_size=10, max_size=10))
def test_squared_norm_orthonormal(ls, cs):
    s = PauliSum.from_labels(dict(zip(ls, cs)))
    assert s.squared_norm() == pytest.approx(sum(c * c for c in cs[: len(ls)] if c != 0.0))


@pytest.mark.parametrize("n", [1, 63, 64, 65, 130, 1024])
def test_word_arrays_round_trip(n):
    rng = np.random.default_rng(n)
    strings = [P("".join(rng.choice(list("IXYZ"), n))) for _ in range(5)]
    x, z = strings_to_arrays(strings, n)
    assert x.shape == (5, (n + 63) // 64)
    assert arrays_to_strings(x, z, n) == strings
    codes = letter_codes(x, z, n)
    assert ["".join("IXYZ"[c] for c in row) for row in codes] == [s.label for s in strings]


def test_label_conventions():
    p = PauliString.single(4, {0: "X", 3: "Z"})
    assert p.label == "XIIZ" and p.support() == [0, 3]
    assert P("XIIZ") == p
    with pytest.raises(ValueError):
        P("XQ")


def test_canonical_order_is_key_order():
    s = PauliSum.from_labels({"ZI": 1.0, "XI": 2.0, "IX": 3.0})
    keys = [p.key for p, _ in s.items()]
    assert keys == sorted(keys)
