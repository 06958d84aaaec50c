"""QCNN circuits compiled to flat sequences of Pauli rotations.

A rotation with generator ``G`` and angle ``t`` is the unitary ``exp(+i t G / 2)``.
With this sign the Heisenberg image of an anticommuting Pauli ``P`` is
``cos(t) P - i sin(t) G P``, the form used by the propagation code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .paulis import PauliString

BLOCK_PARAMS = 15


@dataclass(frozen=True)
class Gate:
    generator: PauliString
    param_id: int

    def sites(self) -> list[int]:
        return self.generator.support()


@dataclass
class Circuit:
    n: int
    gates: list[Gate] = field(default_factory=list)
    n_params: int = 0

    def __post_init__(self):
        for g in self.gates:
            if g.generator.n != self.n:
                raise ValueError("gate generator acts on the wrong number of qubits")
            if not 1 <= g.generator.weight() <= 2:
                raise ValueError(f"generator weight must be 1 or 2, got {g.generator.label}")
            if not 0 <= g.param_id < self.n_params:
                raise ValueError(f"param id {g.param_id} outside [0, {self.n_params})")

    def __len__(self) -> int:
        return len(self.gates)

    def gate_arrays(self) -> dict[str, np.ndarray]:
        """Per-gate site/letter tables consumed by the propagation kernels."""
        m = len(self.gates)
        nsite = np.zeros(m, dtype=np.int64)
        word = np.zeros((m, 2), dtype=np.int64)
        bit = np.zeros((m, 2), dtype=np.int64)
        gx = np.zeros((m, 2), dtype=np.int64)
        gz = np.zeros((m, 2), dtype=np.int64)
        param = np.zeros(m, dtype=np.int64)
        for i, g in enumerate(self.gates):
            sites = g.generator.support()
            nsite[i] = len(sites)
            for j, q in enumerate(sites):
                word[i, j], bit[i, j] = divmod(q, 64)
                gx[i, j] = (g.generator.x >> q) & 1
                gz[i, j] = (g.generator.z >> q) & 1
            param[i] = g.param_id
        return {"nsite": nsite, "word": word, "bit": bit, "gx": gx, "gz": gz, "param": param}

    def to_text(self) -> str:
        lines = [f"n {self.n} params {self.n_params}"]
        lines += [f"{g.generator.label} {g.param_id}" for g in self.gates]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Circuit":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        head = lines[0].split()
        if len(head) != 4 or head[0] != "n" or head[2] != "params":
            raise ValueError(f"bad circuit header: {lines[0]!r}")
        n, n_params = int(head[1]), int(head[3])
        gates = []
        for ln in lines[1:]:
            label, pid = ln.split()
            if len(label) != n:
                raise ValueError(f"gate {label!r} does not have {n} letters")
            gates.append(Gate(PauliString.from_label(label), int(pid)))
        return cls(n, gates, n_params)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "Circuit":
        return cls.from_text(Path(path).read_text())


@dataclass
class QcnnLayout:
    """Block placements per convolutional stage and survivor sets per pooling.

    ``survivors[0]`` is every qubit, ``survivors[j]`` the qubits kept after the
    j-th pooling; the last entry holds the single measured qubit.  ``readout_qubits``
    are the two qubits of the final block (binary tasks use the first one).
    """

    n: int
    style: str
    layers: list[list[tuple[int, int]]]
    survivors: list[list[int]]
    readout_qubits: list[int]

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def blocks(self) -> list[tuple[int, int]]:
        return [b for layer in self.layers for b in layer]

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "style": self.style,
                "layers": [[list(b) for b in layer] for layer in self.layers],
                "survivors": self.survivors,
                "readout_qubits": self.readout_qubits,
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "QcnnLayout":
        d = json.loads(text)
        return cls(
            d["n"],
            d["style"],
            [[tuple(b) for b in layer] for layer in d["layers"]],
            d["survivors"],
            d["readout_qubits"],
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "QcnnLayout":
        return cls.from_json(Path(path).read_text())


def decompose_two_qubit_block(q1: int, q2: int, base_param_id: int, n: int) -> list[Gate]:
    """Fixed 15-rotation template: ZYZ on each qubit, XX/YY/ZZ, ZYZ on each qubit."""
    if q1 == q2:
        raise ValueError("block qubits must differ")
    for q in (q1, q2):
        if not 0 <= q < n:
            raise ValueError(f"qubit {q} out of range for n={n}")
    local = [{q: ax} for q in (q1, q2) for ax in "ZYZ"]
    coupling = [{q1: ax, q2: ax} for ax in "XYZ"]
    gens = local + coupling + local
    return [Gate(PauliString.single(n, g), base_param_id + i) for i, g in enumerate(gens)]


def _conv_blocks(surv: list[int], style: str) -> list[tuple[int, int]]:
    blocks = [(surv[i], surv[i + 1]) for i in range(0, len(surv) - 1, 2)]
    if style == "brick":
        blocks += [(surv[i], surv[i + 1]) for i in range(1, len(surv) - 1, 2)]
    return blocks


def build_qcnn(n: int, layout_style: str = "brick") -> tuple[Circuit, QcnnLayout]:
    """Build the QCNN over ``n`` qubits.

    Convolutions place blocks on neighbouring survivors (``brick`` adds a second,
    offset sublayer; ``non-crossing`` uses disjoint pairs only); each pooling keeps
    every second survivor, lowest index first, until two remain for the final block.
    """
    if n < 2:
        raise ValueError("a QCNN needs at least two qubits")
    if layout_style not in ("brick", "non-crossing"):
        raise ValueError(f"unknown layout style {layout_style!r}")
    surv = list(range(n))
    layers: list[list[tuple[int, int]]] = []
    survivors = [surv]
    while len(surv) > 2:
        layers.append(_conv_blocks(surv, layout_style))
        surv = surv[::2]
        survivors.append(surv)
    layers.append([(surv[0], surv[1])])
    survivors.append([surv[0]])

    gates: list[Gate] = []
    pid = 0
    for layer in layers:
        for q1, q2 in layer:
            gates += decompose_two_qubit_block(q1, q2, pid, n)
            pid += BLOCK_PARAMS
    layout = QcnnLayout(n, layout_style, layers, survivors, [surv[0], surv[1]])
    return Circuit(n, gates, pid), layout


def readout_observables(layout: QcnnLayout, task: str = "binary") -> list[PauliString]:
    n = layout.n
    if task == "binary":
        return [PauliString.single(n, {layout.readout_qubits[0]: "Z"})]
    if task == "four-class":
        if len(layout.readout_qubits) < 2:
            raise ValueError("four-class readout needs two surviving qubits")
        a, b = layout.readout_qubits[:2]
        return [
            PauliString.single(n, {a: "Z"}),
            PauliString.single(n, {b: "Z"}),
            PauliString.single(n, {a: "Z", b: "Z"}),
        ]
    raise ValueError(f"unknown task {task!r}")
