"""Circuit instruction IR, noise models, and experiment circuit generation.

A circuit is a flat, ordered tuple of instructions.  Measurements are
numbered by their position in that order; detector and observable
instructions refer to earlier measurements by absolute record index.

Serialization targets a compatible subset of the de-facto stabilizer
circuit text format (R/RX/RY, CX/CY/CZ, M/MX/MY, MPP, X_ERROR,
PAULI_CHANNEL_1, DEPOLARIZE2, DETECTOR, OBSERVABLE_INCLUDE, TICK), with one
extension instruction, EM_CHANNEL, for the correlated measure-and-Pauli
channel of the entangling-measurement noise model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Union

from .lattice import Lattice
from .schedule import Pauli, Schedule


# ---------------------------------------------------------------------------
# instructions


@dataclass(frozen=True)
class Reset:
    qubits: tuple[int, ...]
    basis: Pauli


@dataclass(frozen=True)
class Gate1:
    pauli: Pauli
    qubit: int


@dataclass(frozen=True)
class Gate2:
    """Controlled-Pauli gate; control acts in the Z basis, target gets `kind`."""

    kind: Pauli  # CX / CY / CZ
    control: int
    target: int


@dataclass(frozen=True)
class Measure1:
    qubit: int
    basis: Pauli
    flip_p: float = 0.0


@dataclass(frozen=True)
class MeasurePP:
    """Direct two-qubit Pauli-product measurement (same Pauli both qubits)."""

    pauli: Pauli
    qubits: tuple[int, int]
    flip_p: float = 0.0
    em_p: float = 0.0  # correlated 31-outcome channel, Paulis applied before


@dataclass(frozen=True)
class Noise1:
    qubits: tuple[int, ...]
    p_x: float
    p_y: float
    p_z: float


@dataclass(frozen=True)
class Noise2:
    """Uniform 15-outcome two-qubit depolarizing channel of total weight p."""

    qubits: tuple[int, int]
    p: float


@dataclass(frozen=True)
class Detector:
    records: tuple[int, ...]
    coords: tuple[float, ...]
    kind: str  # "face" or "edge"


@dataclass(frozen=True)
class Observable:
    id: int
    records: tuple[int, ...]


@dataclass(frozen=True)
class Tick:
    pass


Instruction = Union[
    Reset, Gate1, Gate2, Measure1, MeasurePP, Noise1, Noise2, Detector, Observable, Tick
]

NOISE_KINDS = (Noise1, Noise2)


# ---------------------------------------------------------------------------
# noise models


@dataclass(frozen=True)
class Phenomenological:
    p_x: float
    p_y: float
    p_z: float
    p_m: float

    def __post_init__(self):
        _check_probs(self, ("p_x", "p_y", "p_z", "p_m"))


@dataclass(frozen=True)
class SD:
    p: float

    def __post_init__(self):
        _check_probs(self, ("p",))


@dataclass(frozen=True)
class SI:
    p: float

    def __post_init__(self):
        _check_probs(self, ("p",))
        if 5 * self.p > 1:
            raise ValueError(f"SI derived rate 5p = {5 * self.p} exceeds 1")


@dataclass(frozen=True)
class EM:
    p: float

    def __post_init__(self):
        _check_probs(self, ("p",))


NoiseModel = Union[Phenomenological, SD, SI, EM]


def _check_probs(obj, names):
    for name in names:
        v = getattr(obj, name)
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"{name}={v} outside [0, 1]")


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str  # memory_e / memory_m / stability_e / stability_m
    rounds: int
    circuit_family: str  # single_qubit_measurement / two_qubit_measurement
    quiet: int | None = None  # noiseless padding rounds per end; None = 1 period

    KINDS = ("memory_e", "memory_m", "stability_e", "stability_m")
    FAMILIES = ("single_qubit_measurement", "two_qubit_measurement")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.circuit_family not in self.FAMILIES:
            raise ValueError(f"unknown circuit family {self.circuit_family!r}")
        if self.rounds < 1:
            raise ValueError(f"rounds must be positive, got {self.rounds}")
        if self.quiet is not None and self.quiet < 0:
            raise ValueError(f"quiet must be non-negative, got {self.quiet}")


# ---------------------------------------------------------------------------
# circuit container


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    instructions: tuple[Instruction, ...]
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def num_measurements(self) -> int:
        return sum(1 for op in self.instructions if isinstance(op, (Measure1, MeasurePP)))

    @property
    def num_detectors(self) -> int:
        return sum(1 for op in self.instructions if isinstance(op, Detector))

    def detectors(self) -> list[Detector]:
        return [op for op in self.instructions if isinstance(op, Detector)]

    def observables(self) -> list[Observable]:
        return [op for op in self.instructions if isinstance(op, Observable)]

    def without_noise(self) -> "Circuit":
        """The ideal circuit: noise dropped, flip/channel probabilities zeroed."""
        out = []
        for op in self.instructions:
            if isinstance(op, NOISE_KINDS):
                continue
            if isinstance(op, Measure1) and op.flip_p:
                op = Measure1(op.qubit, op.basis)
            elif isinstance(op, MeasurePP) and (op.flip_p or op.em_p):
                op = MeasurePP(op.pauli, op.qubits)
            out.append(op)
        return Circuit(self.n_qubits, tuple(out), dict(self.metadata))

    def validate(self) -> None:
        n_meas = 0
        for op in self.instructions:
            if isinstance(op, (Measure1, MeasurePP)):
                n_meas += 1
            elif isinstance(op, (Detector, Observable)):
                bad = [k for k in op.records if not (0 <= k < n_meas)]
                if bad:
                    raise ValueError(
                        f"{type(op).__name__} refers to future/invalid records {bad}"
                    )

    # -- text format --------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        if self.metadata:
            lines.append("# " + json.dumps(self.metadata, sort_keys=True))
        n_meas = 0
        for op in self.instructions:
            if isinstance(op, Reset):
                name = {Pauli.X: "RX", Pauli.Y: "RY", Pauli.Z: "R"}[op.basis]
                lines.append(f"{name} " + " ".join(map(str, op.qubits)))
            elif isinstance(op, Gate1):
                lines.append(f"{op.pauli.name} {op.qubit}")
            elif isinstance(op, Gate2):
                lines.append(f"C{op.kind.name} {op.control} {op.target}")
            elif isinstance(op, Measure1):
                name = {Pauli.X: "MX", Pauli.Y: "MY", Pauli.Z: "M"}[op.basis]
                arg = f"({op.flip_p})" if op.flip_p else ""
                lines.append(f"{name}{arg} {op.qubit}")
                n_meas += 1
            elif isinstance(op, MeasurePP):
                a, b = op.qubits
                if op.em_p:
                    lines.append(f"EM_CHANNEL({op.em_p}) {op.pauli.name}{a}*{op.pauli.name}{b}")
                arg = f"({op.flip_p})" if op.flip_p else ""
                lines.append(f"MPP{arg} {op.pauli.name}{a}*{op.pauli.name}{b}")
                n_meas += 1
            elif isinstance(op, Noise1):
                lines.append(
                    f"PAULI_CHANNEL_1({op.p_x}, {op.p_y}, {op.p_z}) "
                    + " ".join(map(str, op.qubits))
                )
            elif isinstance(op, Noise2):
                lines.append(f"DEPOLARIZE2({op.p}) {op.qubits[0]} {op.qubits[1]}")
            elif isinstance(op, Detector):
                coords = ", ".join(str(c) for c in op.coords)
                recs = " ".join(f"rec[{k - n_meas}]" for k in op.records)
                lines.append(f"DETECTOR({coords}) {recs}")
            elif isinstance(op, Observable):
                recs = " ".join(f"rec[{k - n_meas}]" for k in op.records)
                lines.append(f"OBSERVABLE_INCLUDE({op.id}) {recs}")
            elif isinstance(op, Tick):
                lines.append("TICK")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        def enc(op):
            d = {"op": type(op).__name__}
            for k, v in vars(op).items():
                d[k] = v.name if isinstance(v, Pauli) else v
            return d

        return json.dumps(
            {
                "n_qubits": self.n_qubits,
                "metadata": self.metadata,
                "instructions": [enc(op) for op in self.instructions],
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "Circuit":
        raw = json.loads(text)
        kinds = {
            cls.__name__: cls
            for cls in (Reset, Gate1, Gate2, Measure1, MeasurePP, Noise1, Noise2, Detector, Observable, Tick)
        }
        pauli_fields = {"basis", "pauli", "kind_pauli"}
        out = []
        for d in raw["instructions"]:
            cls = kinds[d.pop("op")]
            kw = {}
            for k, v in d.items():
                if k in pauli_fields or (cls is Gate2 and k == "kind"):
                    v = Pauli[v]
                elif isinstance(v, list):
                    v = tuple(v)
                kw[k] = v
            out.append(cls(**kw))
        return Circuit(raw["n_qubits"], tuple(out), raw.get("metadata", {}))


# ---------------------------------------------------------------------------
# phenomenological rates


def phenom_rates(p: float, eta_m: float, eta_z: float, M: int, Q: int) -> dict:
    """Solve for (p_X, p_Y, p_Z, p_m) given the total rate and both biases.

    The constraints are: fixed total rate p = (p_m M + (p_X+p_Y+p_Z) Q)/(M+3Q),
    measurement bias eta_m = p_m/(p_X+p_Y+p_Z), Z bias eta_z = 2 p_Z/(p_X+p_Y),
    and p_X = p_Y.
    """
    if p <= 0 or eta_m <= 0 or eta_z <= 0:
        raise ValueError("p, eta_m, eta_z must all be positive")
    if M < 1 or Q < 1:
        raise ValueError("M and Q must be at least 1")
    p_x = p * (M + 3 * Q) / ((2 + eta_z) * (eta_m * M + Q))
    p_z = eta_z * p_x
    p_m = eta_m * (2 + eta_z) * p_x
    rates = {"p_X": p_x, "p_Y": p_x, "p_Z": p_z, "p_m": p_m}
    bad = {k: v for k, v in rates.items() if not (0.0 <= v <= 1.0)}
    if bad:
        raise ValueError(f"parameters force rates outside [0, 1]: {bad}")
    return rates


def count_noise_locations(c: Circuit) -> dict:
    """M = number of measurements, Q = number of data-qubit noise locations."""
    M = 0
    Q = 0
    for op in c.instructions:
        if isinstance(op, (Measure1, MeasurePP)):
            M += 1
        elif isinstance(op, Noise1):
            Q += len(op.qubits)
        elif isinstance(op, Noise2):
            Q += 1
    return {"M": M, "Q": Q}


# ---------------------------------------------------------------------------
# experiment construction lives in builder.py; re-exported here


def build_experiment(lat: Lattice, s: Schedule, spec: ExperimentSpec, nm: NoiseModel) -> Circuit:
    from .builder import build_experiment as _impl

    return _impl(lat, s, spec, nm)
