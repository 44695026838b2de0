"""Measurement schedules: parsing, validation, and closed-form predictions.

A schedule is a cyclic list of (colour, Pauli, repeats) steps.  Two named
families have canonical cell patterns:

    X^a Y^b Z^c : (c,X)*a, (m,Y)*b, (y,Z)*c
    X^a Z^b     : (c,X)*a, (m,Z)*b, (y,X)*a, (c,Z)*b, (m,X)*a, (y,Z)*b

Consecutive distinct cells must share neither their Pauli (row of the boson
table) nor their colour (column); repeating a cell is expressed through the
repeats field only.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .lattice import Colour


class Pauli(Enum):
    X = 0
    Y = 1
    Z = 2

    def __repr__(self) -> str:
        return f"Pauli.{self.name}"


@dataclass(frozen=True)
class ScheduleStep:
    colour: Colour
    pauli: Pauli
    repeats: int = 1

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")


@dataclass(frozen=True)
class Schedule:
    steps: tuple[ScheduleStep, ...]
    name: str = ""

    @property
    def rounds_per_period(self) -> int:
        return sum(s.repeats for s in self.steps)

    def expand(self, n_rounds: int) -> list[tuple[int, int, ScheduleStep]]:
        """Unroll the cyclic schedule to (step index, repeat index, step)."""
        out = []
        while len(out) < n_rounds:
            for i, step in enumerate(self.steps):
                for u in range(step.repeats):
                    out.append((i, u, step))
                    if len(out) == n_rounds:
                        return out
        return out


_SCHEDULE_RE = re.compile(r"^X(\d+)(?:Y(\d+))?Z(\d+)$")

_XYZ_CELLS = ((Colour.C, Pauli.X), (Colour.M, Pauli.Y), (Colour.Y, Pauli.Z))
_XZ_CELLS = (
    (Colour.C, Pauli.X),
    (Colour.M, Pauli.Z),
    (Colour.Y, Pauli.X),
    (Colour.C, Pauli.Z),
    (Colour.M, Pauli.X),
    (Colour.Y, Pauli.Z),
)


def parse_schedule(spec: str) -> Schedule:
    """Parse ``X<a>Y<b>Z<c>`` or ``X<a>Z<b>`` into its canonical schedule."""
    m = _SCHEDULE_RE.match(spec.strip())
    if not m:
        raise ValueError(f"malformed schedule spec {spec!r}")
    a, b, c = (int(g) if g is not None else None for g in m.groups())
    if 0 in (a, b, c):
        raise ValueError(f"schedule spec {spec!r} has a zero repeat count")
    if b is not None:
        reps = (a, b, c)
        steps = tuple(
            ScheduleStep(col, p, reps[i]) for i, (col, p) in enumerate(_XYZ_CELLS)
        )
    else:
        reps = (a, c, a, c, a, c)
        steps = tuple(
            ScheduleStep(col, p, reps[i]) for i, (col, p) in enumerate(_XZ_CELLS)
        )
    return Schedule(steps=steps, name=spec.strip())


def render(s: Schedule) -> str:
    return s.name if s.name else "+".join(
        f"({st.colour.name},{st.pauli.name})x{st.repeats}" for st in s.steps
    )


@dataclass(frozen=True)
class Violation:
    step_a: int
    step_b: int
    reason: str


def validate_schedule(s: Schedule) -> Violation | None:
    """None when valid, else the first offending cyclic step pair."""
    n = len(s.steps)
    if n < 2:
        return Violation(0, 0, "schedule needs at least 2 distinct cells")
    for i in range(n):
        a, b = s.steps[i], s.steps[(i + 1) % n]
        if a.colour == b.colour and a.pauli == b.pauli:
            return Violation(i, (i + 1) % n, "consecutive identical cells (use repeats)")
        if a.pauli == b.pauli:
            return Violation(i, (i + 1) % n, "consecutive cells share a Pauli row")
        if a.colour == b.colour:
            return Violation(i, (i + 1) % n, "consecutive cells share a colour column")
    return None


def schedule_family(s: Schedule) -> str | None:
    """'xyz' / 'xz' for symmetric-repeat members of the named families."""
    cells = tuple((st.colour, st.pauli) for st in s.steps)
    if cells == _XYZ_CELLS and len({st.repeats for st in s.steps}) == 1:
        return "xyz"
    if cells == _XZ_CELLS:
        reps = [st.repeats for st in s.steps]
        if reps[0::2] == [reps[0]] * 3 and reps[1::2] == [reps[1]] * 3 and reps[0] == reps[1]:
            return "xz"
    return None


NOISE_FAMILIES = (
    "phenomenological",
    "measurement",
    "z",
    "single_qubit_circuit",
    "entangling_circuit",
)


@dataclass(frozen=True)
class SchedulePredictions:
    """Closed-form distance and hyperedge-likelihood predictions.

    Distances are returned as callables: spacelike ones take the lattice
    dimension (n_M or n_E), timelike ones the block height in rounds.
    ``math.inf`` marks entries with no logical error of that kind.
    """

    d_sE: object
    d_sM: object
    d_tE: object
    d_tM: object
    p_h: Fraction | float


def predict_metrics(s: Schedule, noise_family: str) -> SchedulePredictions:
    fam = schedule_family(s)
    if fam is None:
        raise ValueError(
            f"no closed-form predictions for schedule {render(s)!r}; "
            f"compute metrics numerically instead"
        )
    if noise_family not in NOISE_FAMILIES:
        raise ValueError(f"unknown noise family {noise_family!r}")
    r = s.steps[0].repeats
    inf = math.inf

    if fam == "xyz":
        if noise_family == "phenomenological":
            return SchedulePredictions(
                d_sE=lambda n_E: n_E,
                d_sM=lambda n_M: Fraction(4, 3) * n_M,
                d_tE=lambda h: Fraction(h, 2 * r),
                d_tM=lambda h: Fraction(h, 2 * r),
                p_h=Fraction(2, 9) + Fraction(1, 3 * r),
            )
        if noise_family == "measurement":
            return SchedulePredictions(
                d_sE=lambda n_E: r * n_E,
                d_sM=lambda n_M: r * Fraction(4, 3) * n_M,
                d_tE=lambda h: Fraction(h, 2),
                d_tM=lambda h: Fraction(h, 2),
                p_h=Fraction(1, r),
            )
        if noise_family == "z":
            return SchedulePredictions(
                d_sE=lambda n_E: n_E,
                d_sM=lambda n_M: Fraction(4, 3) * n_M,
                d_tE=lambda h: Fraction(h, 2 * r),
                d_tM=lambda h: Fraction(h, 2 * r),
                p_h=Fraction(1, 3),
            )
        if noise_family == "single_qubit_circuit":
            return SchedulePredictions(
                d_sE=lambda n_E: n_E,
                d_sM=lambda n_M: Fraction(4, 3) * n_M,
                d_tE=lambda h: Fraction(h, 4),
                d_tM=lambda h: Fraction(h, 4),
                p_h=None,
            )
        # entangling-measurement circuits halve the spacelike distances
        return SchedulePredictions(
            d_sE=lambda n_E: Fraction(n_E, 2),
            d_sM=lambda n_M: Fraction(2, 3) * n_M,
            d_tE=lambda h: Fraction(h, 2),
            d_tM=lambda h: Fraction(h, 2),
            p_h=None,
        )

    # fam == "xz"
    if noise_family == "phenomenological":
        return SchedulePredictions(
            d_sE=lambda n_E: n_E,
            d_sM=lambda n_M: Fraction(4, 3) * n_M,
            d_tE=lambda h: min(Fraction(h, 2 * r), Fraction(h, 4)),
            d_tM=lambda h: min(Fraction(h, 2 * r), Fraction(h, 4)),
            p_h=Fraction(2, 9),
        )
    if noise_family == "measurement":
        return SchedulePredictions(
            d_sE=lambda n_E: r * n_E,
            d_sM=lambda n_M: r * Fraction(4, 3) * n_M,
            d_tE=lambda h: Fraction(h, 4),
            d_tM=lambda h: Fraction(h, 4),
            p_h=Fraction(0),
        )
    if noise_family == "z":
        return SchedulePredictions(
            d_sE=lambda n_E: n_E,
            d_sM=lambda n_M: inf,
            d_tE=lambda h: Fraction(h, 2 * r),
            d_tM=lambda h: inf,
            p_h=Fraction(0),
        )
    if noise_family == "single_qubit_circuit":
        return SchedulePredictions(
            d_sE=lambda n_E: n_E,
            d_sM=lambda n_M: Fraction(4, 3) * n_M,
            d_tE=lambda h: Fraction(h, 4),
            d_tM=lambda h: Fraction(h, 4),
            p_h=None,
        )
    return SchedulePredictions(
        d_sE=lambda n_E: Fraction(n_E, 2),
        d_sM=lambda n_M: Fraction(2, 3) * n_M,
        d_tE=lambda h: Fraction(h, 4),
        d_tM=lambda h: Fraction(h, 4),
        p_h=None,
    )
