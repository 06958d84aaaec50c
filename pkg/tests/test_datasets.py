import math

import numpy as np
import pytest

from pauliqcnn.datasets import (
    HALDANE_H2_CRITICAL,
    HamiltonianSpec,
    LabelError,
    assign_label,
    balanced_box_grid,
    cluster_winding,
    energy_and_residual,
    generate_dataset,
    ground_state,
    hamiltonian_matrix,
    hamiltonian_terms,
    label_flags,
    line_grid,
    load_shadow_sets,
    load_states,
    read_manifest,
    read_statevector,
    state_seed,
    write_statevector,
)

from conftest import pauli_matrix, random_state


def test_xxx_single_bond():
    H = hamiltonian_terms(HamiltonianSpec("XXX", {"J1": 1.0, "J2": 1.0}, 2))
    assert {p.label: c for p, c in H.items()} == {"XX": 1.0, "YY": 1.0, "ZZ": 1.0}


def test_cluster_field_only():
    H = hamiltonian_terms(HamiltonianSpec("Cluster", {"J1": 0.0, "J2": 0.0}, 3))
    assert {p.label: c for p, c in H.items()} == {"ZII": 1.0, "IZI": 1.0, "IIZ": 1.0}


def test_annni_next_nearest_sign():
    H = {p.label: c for p, c in hamiltonian_terms(HamiltonianSpec("ANNNI", {"J1": 1.0, "J2": -0.5, "B": 0.0}, 4)).items()}
    assert H["XIXI"] == 0.5 and H["IXIX"] == 0.5 and H["XXII"] == -1.0


def test_cluster_closed_boundary_wraps():
    H = {p.label: c for p, c in hamiltonian_terms(HamiltonianSpec("Cluster", {"J1": 1.0, "J2": 1.0}, 4)).items()}
    assert H["XIIX"] == -1.0 and H["ZXIX"] == -1.0


def test_matrix_matches_kron_sum():
    spec = HamiltonianSpec("Haldane", {"J": 1.0, "h1": 0.5, "h2": 0.3}, 4)
    H = hamiltonian_terms(spec)
    ref = sum(c * pauli_matrix(p.label) for p, c in H.items())
    assert np.allclose(hamiltonian_matrix(H), ref)


def test_singlet():
    psi, e, gap = ground_state(HamiltonianSpec("XXX", {"J1": 1.0, "J2": 1.0}, 2))
    assert e == pytest.approx(-3.0) and gap == pytest.approx(4.0)
    assert abs(abs(psi[1]) - 1 / math.sqrt(2)) < 1e-12 and abs(psi[0]) < 1e-12


def test_cluster_trivial_ground_state():
    psi, e, _ = ground_state(HamiltonianSpec("Cluster", {"J1": 0.0, "J2": 0.0}, 4))
    assert e == pytest.approx(-4.0) and abs(psi[-1]) == pytest.approx(1.0)


def test_annni_strong_field():
    psi, _, _ = ground_state(HamiltonianSpec("ANNNI", {"J1": 1.0, "J2": 0.0, "B": 10.0}, 6))
    assert abs(psi[0]) ** 2 > 0.99


def test_lanczos_path_agrees_with_residual():
    spec = HamiltonianSpec("XXX", {"J1": 1.0, "J2": 0.6}, 12)
    psi, e, gap = ground_state(spec)
    e2, res = energy_and_residual(hamiltonian_terms(spec), psi)
    assert e2 == pytest.approx(e, abs=1e-9) and res < 1e-6 and gap > 0


def test_ground_state_deterministic():
    spec = HamiltonianSpec("Haldane", {"J": 1.0, "h1": 0.5, "h2": 0.5}, 8)
    assert np.array_equal(ground_state(spec)[0], ground_state(spec)[0])


@pytest.mark.parametrize(
    "spec, label",
    [
        (HamiltonianSpec("XXX", {"J1": 1.0, "J2": 0.5}, 8), 0),
        (HamiltonianSpec("XXX", {"J1": 1.0, "J2": 1.5}, 8), 1),
        (HamiltonianSpec("Haldane", {"J": 1.0, "h1": 0.5, "h2": 0.3}, 9), 0),
        (HamiltonianSpec("Haldane", {"J": 1.0, "h1": 0.5, "h2": 0.6}, 9), 1),
        (HamiltonianSpec("Cluster", {"J1": 0.0, "J2": 0.0}, 8), 0),
        (HamiltonianSpec("Cluster", {"J1": 2.0, "J2": 0.0}, 8), 1),
        (HamiltonianSpec("Cluster", {"J1": -2.0, "J2": 0.0}, 8), 2),
        (HamiltonianSpec("Cluster", {"J1": 0.0, "J2": 2.0}, 8), 3),
        (HamiltonianSpec("ANNNI", {"J1": 1.0, "J2": 0.0, "B": 0.5}, 8), 0),
        (HamiltonianSpec("ANNNI", {"J1": 1.0, "J2": 0.0, "B": 2.0}, 8), 1),
        (HamiltonianSpec("ANNNI", {"J1": 1.0, "J2": -1.0, "B": 0.1}, 8), 3),
    ],
)
def test_labels(spec, label):
    assert assign_label(spec) == label


def test_haldane_boundary_flag():
    spec = HamiltonianSpec("Haldane", {"J": 1.0, "h1": 0.5, "h2": HALDANE_H2_CRITICAL}, 9)
    assert assign_label(spec) == 1 and "boundary" in label_flags(spec)


def test_unlabelable_regions():
    with pytest.raises(LabelError):
        assign_label(HamiltonianSpec("XXX", {"J1": -1.0, "J2": 1.0}, 4))
    with pytest.raises(LabelError):
        assign_label(HamiltonianSpec("Haldane", {"J": 2.0, "h1": 0.5, "h2": 0.3}, 4))


def test_cluster_winding_counts():
    assert cluster_winding(0.0, 0.0) == (0, 0.0)
    assert cluster_winding(0.0, 3.0)[0] == 2
    assert cluster_winding(3.0, 0.0) == (1, 1.0)


def test_bad_spec():
    with pytest.raises(ValueError):
        HamiltonianSpec("XXX", {"J1": 1.0}, 4)
    with pytest.raises(ValueError):
        HamiltonianSpec("Ising", {}, 4)


def test_balanced_box_grid():
    specs = balanced_box_grid("Cluster", 8, {"J1": (-4, 4), "J2": (-1, 4)}, 5, 7)
    labels = [assign_label(s) for s in specs]
    assert labels == sorted(labels) and np.bincount(labels).tolist() == [5, 5, 5, 5]
    assert specs == balanced_box_grid("Cluster", 8, {"J1": (-4, 4), "J2": (-1, 4)}, 5, 7)


def test_statevector_round_trip(tmp_path, rng):
    psi = random_state(5, rng)
    write_statevector(tmp_path / "s.bin", psi, 42)
    back, sid = read_statevector(tmp_path / "s.bin")
    assert sid == 42 and np.array_equal(back, psi)
    (tmp_path / "bad.bin").write_bytes((tmp_path / "s.bin").read_bytes()[:-16])
    with pytest.raises(ValueError):
        read_statevector(tmp_path / "bad.bin")


def test_state_seed_streams_differ():
    assert state_seed(1, "shadows", 0) != state_seed(1, "shadows", 1)
    assert state_seed(1, "shadows", 0) != state_seed(1, "split", 0)
    assert state_seed(1, "shadows", 0) == state_seed(1, "shadows", 0)


def _xxx_grid():
    return line_grid("XXX", 8, "J2", 0.2, 1.8, 10, {"J1": 1.0})


def test_dataset_with_shadows(tmp_path):
    states = generate_dataset(_xxx_grid(), 100, 3, tmp_path)
    assert len(list((tmp_path / "shadows").glob("*.txt"))) == 10
    assert np.bincount([s.label for s in states]).tolist() == [5, 5]
    entries = read_manifest(tmp_path / "manifest.csv")
    assert [e.label for e in entries] == [s.label for s in states]
    sets = load_shadow_sets(tmp_path / "manifest.csv")
    assert all(len(s) == 100 for s in sets) and [s.label for s in sets] == [s.label for s in states]


def test_dataset_exact_mode(tmp_path):
    generate_dataset(_xxx_grid()[:3], 0, 3, tmp_path, save_states=True)
    assert not (tmp_path / "shadows").exists()
    loaded = load_states(tmp_path / "manifest.csv")
    assert len(loaded) == 3 and loaded[0][2].size == 256


def test_dataset_byte_identical(tmp_path):
    for d in ("a", "b"):
        generate_dataset(_xxx_grid()[:4], 50, 9, tmp_path / d, save_states=True)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_external_labels(tmp_path):
    states = generate_dataset(_xxx_grid()[:2], 0, 1, tmp_path, labels=[1, 0])
    assert [s.label for s in states] == [1, 0] and "external" in states[0].label_flags
