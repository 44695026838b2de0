"""Symbolic stabilizer-tableau reference simulator.

Rows carry, besides the Pauli (x/z bitmasks and an i-exponent phase), two
extra bitmasks: which measurement records and which random-outcome symbols
the row's sign depends on.  Random measurement outcomes are never drawn;
they stay symbolic, with the reference convention that every random outcome
is +1.  A product of measurement records is deterministic exactly when its
accumulated symbol mask cancels to zero, which is how declared detectors
and observables are verified.

Row convention: operator = i^phase * prod_q X_q^{x_q} Z_q^{z_q}; a Hermitian
Pauli with sign s has phase = (#Y + 2*[s == -1]) mod 4.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circuit import (
    Circuit,
    Detector,
    Gate1,
    Gate2,
    Measure1,
    MeasurePP,
    Observable,
    Reset,
    Tick,
)
from .schedule import Pauli

# row layout: [x, z, phase, records, symbols]
_X, _Z, _PH, _REC, _SYM = range(5)


def _popcount(v: int) -> int:
    return v.bit_count()


def pauli_bits(p: Pauli) -> tuple[int, int]:
    return (int(p != Pauli.Z), int(p != Pauli.X))


def _build_gate_lut() -> dict:
    """Conjugation tables for CX/CY/CZ on (control, target) Pauli bit pairs.

    Computed numerically once; keys are (kind, xc, zc, xt, zt), values are
    (xc', zc', xt', zt', dphase) with dphase in {0, 2}.
    """
    I = np.eye(2)
    X = np.array([[0, 1], [1, 0]], dtype=complex)
    Z = np.array([[1, 0], [0, -1]], dtype=complex)
    paulis = {Pauli.X: X, Pauli.Y: 1j * X @ Z, Pauli.Z: Z}
    p0 = np.diag([1, 0]).astype(complex)
    p1 = np.diag([0, 1]).astype(complex)
    lut = {}
    for kind, P in paulis.items():
        U = np.kron(p0, I) + np.kron(p1, P)
        for xc in (0, 1):
            for zc in (0, 1):
                for xt in (0, 1):
                    for zt in (0, 1):
                        base = np.kron(
                            np.linalg.matrix_power(X, xc) @ np.linalg.matrix_power(Z, zc),
                            np.linalg.matrix_power(X, xt) @ np.linalg.matrix_power(Z, zt),
                        )
                        conj = U @ base @ U.conj().T
                        hit = None
                        for xc2 in (0, 1):
                            for zc2 in (0, 1):
                                for xt2 in (0, 1):
                                    for zt2 in (0, 1):
                                        cand = np.kron(
                                            np.linalg.matrix_power(X, xc2)
                                            @ np.linalg.matrix_power(Z, zc2),
                                            np.linalg.matrix_power(X, xt2)
                                            @ np.linalg.matrix_power(Z, zt2),
                                        )
                                        for dph, coeff in ((0, 1), (1, 1j), (2, -1), (3, -1j)):
                                            if np.allclose(conj, coeff * cand):
                                                hit = (xc2, zc2, xt2, zt2, dph)
                        assert hit is not None
                        lut[(kind, xc, zc, xt, zt)] = hit
    return lut


GATE_LUT = _build_gate_lut()


@dataclass
class MeasurementInfo:
    deterministic: bool
    symbols: int  # symbol-mask expansion of the outcome
    value: int  # reference outcome parity (0 => +1); 0 for random outcomes


class Tableau:
    """CHP-style tableau with destabilizers and symbolic sign bookkeeping."""

    def __init__(self, n: int):
        self.n = n
        self.destab = [[1 << i, 0, 0, 0, 0] for i in range(n)]
        self.stab = [[0, 1 << i, 0, 0, 0] for i in range(n)]
        self.watch: list[list[int]] = []
        self.n_symbols = 0
        self.meas: list[MeasurementInfo] = []

    # -- row algebra --------------------------------------------------------

    @staticmethod
    def _mult(r1: list[int], r2: list[int]) -> None:
        r1[_PH] = (r1[_PH] + r2[_PH] + 2 * _popcount(r1[_Z] & r2[_X])) & 3
        r1[_X] ^= r2[_X]
        r1[_Z] ^= r2[_Z]
        r1[_REC] ^= r2[_REC]
        r1[_SYM] ^= r2[_SYM]

    @staticmethod
    def _anticommutes(row: list[int], x: int, z: int) -> bool:
        return bool((_popcount(row[_X] & z) + _popcount(row[_Z] & x)) & 1)

    def _all_rows(self):
        yield from self.destab
        yield from self.stab
        yield from self.watch

    # -- gates --------------------------------------------------------------

    def apply_pauli(self, x: int, z: int) -> None:
        for row in self._all_rows():
            if self._anticommutes(row, x, z):
                row[_PH] = (row[_PH] + 2) & 3

    def apply_gate2(self, kind: Pauli, c: int, t: int) -> None:
        cb, tb = 1 << c, 1 << t
        for row in self._all_rows():
            xc = int(bool(row[_X] & cb))
            zc = int(bool(row[_Z] & cb))
            xt = int(bool(row[_X] & tb))
            zt = int(bool(row[_Z] & tb))
            if not (xc | zc | xt | zt):
                continue
            xc2, zc2, xt2, zt2, dph = GATE_LUT[(kind, xc, zc, xt, zt)]
            row[_X] = (row[_X] & ~(cb | tb)) | (xc2 * cb) | (xt2 * tb)
            row[_Z] = (row[_Z] & ~(cb | tb)) | (zc2 * cb) | (zt2 * tb)
            row[_PH] = (row[_PH] + dph) & 3

    # -- measurement and reset ----------------------------------------------

    def _project(self, x: int, z: int, phase_op: int, rec: int, sym: int) -> int:
        """Project onto +op, multiplying anticommuting rows; returns pivot."""
        pivot = None
        for i in range(self.n):
            if self._anticommutes(self.stab[i], x, z):
                pivot = i
                break
        assert pivot is not None
        old = list(self.stab[pivot])
        for row in self._all_rows():
            if row is not self.stab[pivot] and self._anticommutes(row, x, z):
                self._mult(row, old)
        self.destab[pivot] = old
        self.stab[pivot] = [x, z, phase_op, rec, sym]
        return pivot

    def _deterministic_expand(self, x: int, z: int) -> list[int]:
        acc = [0, 0, 0, 0, 0]
        for i in range(self.n):
            if self._anticommutes(self.destab[i], x, z):
                self._mult(acc, self.stab[i])
        assert acc[_X] == x and acc[_Z] == z, "operator not in stabilizer span"
        return acc

    def in_span(self, x: int, z: int) -> bool:
        """Whether +/-(x,z) lies in the current stabilizer group."""
        acc_x = acc_z = 0
        for i in range(self.n):
            if self._anticommutes(self.destab[i], x, z):
                acc_x ^= self.stab[i][_X]
                acc_z ^= self.stab[i][_Z]
        return acc_x == x and acc_z == z

    def measure(self, x: int, z: int, phase_op: int) -> MeasurementInfo:
        k = len(self.meas)
        anti = any(self._anticommutes(self.stab[i], x, z) for i in range(self.n))
        if anti:
            # the fresh symbol and record bit k name the same outcome; the row
            # carries only the record bit so later resolutions count it once
            sym = 1 << self.n_symbols
            self.n_symbols += 1
            self._project(x, z, phase_op, 1 << k, 0)
            info = MeasurementInfo(False, sym, 0)
        else:
            for w in self.watch:
                assert not self._anticommutes(w, x, z), (
                    "watch row anticommutes with a deterministic measurement"
                )
            acc = self._deterministic_expand(x, z)
            # resolve the record dependence into symbols/values of earlier
            # measurements so detector checks reduce to symbol-mask XORs
            symbols = acc[_SYM]
            value = ((acc[_PH] - phase_op) & 3) >> 1
            rec = acc[_REC]
            j = 0
            while rec:
                if rec & 1:
                    symbols ^= self.meas[j].symbols
                    value ^= self.meas[j].value
                rec >>= 1
                j += 1
            info = MeasurementInfo(True, symbols, value)
        self.meas.append(info)
        return info

    def reset(self, x: int, z: int, phase_op: int) -> None:
        """Force +op into the stabilizer group (qubit reinitialization).

        Semantically: measure op, discard the outcome, and apply a Pauli F
        anticommuting with op when the outcome was -1.  Rows that anticommute
        with F are first multiplied by the (outcome-carrying) op row so their
        signs correctly absorb the conditional flip; the op row itself ends up
        clean with no record or symbol dependence.
        """
        fx, fz = (0, 1) if (x and not z) or (x and z) else (1, 0)
        qbit = 1 << ((x | z).bit_length() - 1)
        fmask_x, fmask_z = fx * qbit, fz * qbit

        if any(self._anticommutes(self.stab[i], x, z) for i in range(self.n)):
            sym = 1 << self.n_symbols
            self.n_symbols += 1
            pivot = self._project(x, z, phase_op, 0, sym)
            op_row = list(self.stab[pivot])
            for row in self._all_rows():
                if row is not self.stab[pivot] and self._anticommutes(row, fmask_x, fmask_z):
                    self._mult(row, op_row)
            self.stab[pivot] = [x, z, phase_op, 0, 0]
            return
        # op already in +/- span: absorb the conditional flip, then rebase so
        # one generator is exactly +op with a clean sign
        acc = self._deterministic_expand(x, z)
        for row in self._all_rows():
            if self._anticommutes(row, fmask_x, fmask_z):
                self._mult(row, acc)
        idx = [i for i in range(self.n) if self._anticommutes(self.destab[i], x, z)]
        assert idx, "reset operator is trivial"
        for w in self.watch:
            assert not self._anticommutes(w, x, z), "watch row killed by reset"
        i0 = idx[0]
        d0 = list(self.destab[i0])
        for j in idx[1:]:
            self._mult(self.destab[j], d0)
        self.stab[i0] = [x, z, phase_op, 0, 0]

    # -- watch rows (tracked logical representatives) ------------------------

    def add_watch(self, x: int, z: int, phase: int) -> int:
        self.watch.append([x, z, phase, 0, 0])
        return len(self.watch) - 1


def _meas_op(op) -> tuple[int, int, int]:
    """(x, z, phase) for a Measure1/MeasurePP/Reset target operator."""
    if isinstance(op, (Measure1, Reset)):
        qubits = op.qubits if isinstance(op, Reset) else (op.qubit,)
        xb, zb = pauli_bits(op.basis)
        x = z = 0
        for q in qubits:
            x |= xb << q
            z |= zb << q
        return x, z, (_popcount(x & z) & 3)
    a, b = op.qubits
    xb, zb = pauli_bits(op.pauli)
    x = (xb << a) | (xb << b)
    z = (zb << a) | (zb << b)
    return x, z, (_popcount(x & z) & 3)


@dataclass
class VerificationReport:
    n_measurements: int
    deterministic: list[bool]
    detector_ok: list[bool]
    detector_ref: list[int]
    observable_ok: list[bool]
    observable_ref: list[int]
    failures: list[str] = field(default_factory=list)
    watch_records: list[tuple[int, ...]] | None = None
    # per-measurement random-outcome symbol masks; a deterministic
    # measurement's mask names the random outcomes its value depends on
    symbols: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def simulate_noiseless(c: Circuit, watch: list[tuple[int, int, int]] | None = None) -> VerificationReport:
    """Run the ideal circuit; verify every declared detector and observable.

    `watch` optionally supplies (x, z, phase) Pauli rows to be tracked through
    the circuit; a row must reduce to the identity by the end, and its
    accumulated record set is reported (used to derive observables).
    """
    ideal = c.without_noise()
    tab = Tableau(ideal.n_qubits)
    watch_pending = list(watch) if watch else []

    det_ok: list[bool] = []
    det_ref: list[int] = []
    obs_ok: list[bool] = []
    obs_ref: list[int] = []
    failures: list[str] = []
    det_i = 0

    for pos, op in enumerate(ideal.instructions):
        if isinstance(op, Reset):
            xb, zb = pauli_bits(op.basis)
            for q in op.qubits:
                tab.reset(xb << q, zb << q, (xb & zb) & 3)
        elif isinstance(op, Gate1):
            xb, zb = pauli_bits(op.pauli)
            tab.apply_pauli(xb << op.qubit, zb << op.qubit)
        elif isinstance(op, Gate2):
            tab.apply_gate2(op.kind, op.control, op.target)
        elif isinstance(op, (Measure1, MeasurePP)):
            # multiply anticommuting watch rows inside measure via _project;
            # watch rows are part of _all_rows so nothing extra to do
            x, z, ph = _meas_op(op)
            tab.measure(x, z, ph)
        elif isinstance(op, Detector):
            sym = 0
            ref = 0
            for k in op.records:
                sym ^= tab.meas[k].symbols
                ref ^= tab.meas[k].value
            ok = sym == 0
            if not ok:
                failures.append(f"detector {det_i} (instruction {pos}) is not deterministic")
            det_ok.append(ok)
            det_ref.append(ref)
            det_i += 1
        elif isinstance(op, Observable):
            sym = 0
            ref = 0
            for k in op.records:
                sym ^= tab.meas[k].symbols
                ref ^= tab.meas[k].value
            ok = sym == 0
            if not ok:
                failures.append(f"observable {op.id} is not deterministic")
            obs_ok.append(ok)
            obs_ref.append(ref)
        elif isinstance(op, Tick) and watch_pending:
            # watch rows name representatives of the state *after*
            # initialization, so they join at the first Tick
            for x, z, ph in watch_pending:
                tab.add_watch(x, z, ph)
            watch_pending = []

    watch_records = None
    if watch:
        watch_records = []
        for i, row in enumerate(tab.watch):
            if row[_X] or row[_Z]:
                # the residual support must be absorbed by the final data
                # readout: expand it over the (fully collapsed) stabilizer
                # group and fold the readout records into the row
                if not tab.in_span(row[_X], row[_Z]):
                    failures.append(f"watch row {i} did not reduce to the identity")
                    watch_records.append(())
                    continue
                acc = tab._deterministic_expand(row[_X], row[_Z])
                tab._mult(row, acc)
            sym = row[_SYM]
            recs = []
            rec = row[_REC]
            j = 0
            while rec:
                if rec & 1:
                    recs.append(j)
                    sym ^= tab.meas[j].symbols
                rec >>= 1
                j += 1
            if sym:
                failures.append(f"watch row {i} is not deterministic")
            watch_records.append(tuple(recs))

    return VerificationReport(
        n_measurements=len(tab.meas),
        deterministic=[m.deterministic for m in tab.meas],
        detector_ok=det_ok,
        detector_ref=det_ref,
        observable_ok=obs_ok,
        observable_ref=obs_ref,
        failures=failures,
        watch_records=watch_records,
        symbols=[m.symbols for m in tab.meas],
    )


# ---------------------------------------------------------------------------
# establishment rank trace


def establishment_rank_trace(c: Circuit) -> dict:
    """Stabilizer-group rank after each round, starting from no constraints.

    The leading block of reset instructions (state preparation) is skipped so
    the trace reflects what the measurement schedule alone establishes.
    Rounds are delimited by Tick instructions.
    """
    ideal = c.without_noise()
    n = ideal.n_qubits
    gens: list[tuple[int, int]] = []  # (x, z); signs irrelevant for rank

    def anticommutes(g, x, z):
        return bool((_popcount(g[0] & z) + _popcount(g[1] & x)) & 1)

    def in_span(x, z):
        # GF(2) elimination over the current generators
        rows = [list(g) for g in gens]
        tx, tz = x, z
        for piv in rows:
            bit = (piv[0] | piv[1]).bit_length() - 1
            pick_x = bool(piv[0] >> bit & 1)
            if (tx if pick_x else tz) >> bit & 1:
                tx ^= piv[0]
                tz ^= piv[1]
        return tx == 0 and tz == 0

    def project(x, z):
        anti = [i for i in range(len(gens)) if anticommutes(gens[i], x, z)]
        if anti:
            g0 = gens[anti[0]]
            for i in anti[1:]:
                gens[i] = (gens[i][0] ^ g0[0], gens[i][1] ^ g0[1])
            gens[anti[0]] = (x, z)
        elif not in_span(x, z):
            gens.append((x, z))

    # keep generators in echelon-ish form lazily: in_span does full elimination
    ranks: list[int] = []
    started = False
    for op in ideal.instructions:
        if isinstance(op, Reset):
            if not started:
                continue  # initial state preparation
            xb, zb = pauli_bits(op.basis)
            for q in op.qubits:
                project(xb << q, zb << q)
        elif isinstance(op, Gate1):
            started = True
        elif isinstance(op, Gate2):
            started = True
            kind, cb, tb = op.kind, 1 << op.control, 1 << op.target
            for i, (x, z) in enumerate(gens):
                xc = int(bool(x & cb))
                zc = int(bool(z & cb))
                xt = int(bool(x & tb))
                zt = int(bool(z & tb))
                if not (xc | zc | xt | zt):
                    continue
                xc2, zc2, xt2, zt2, _ = GATE_LUT[(kind, xc, zc, xt, zt)]
                x = (x & ~(cb | tb)) | (xc2 * cb) | (xt2 * tb)
                z = (z & ~(cb | tb)) | (zc2 * cb) | (zt2 * tb)
                gens[i] = (x, z)
        elif isinstance(op, (Measure1, MeasurePP)):
            started = True
            x, z, _ = _meas_op(op)
            project(x, z)
        elif isinstance(op, Tick):
            if started:
                ranks.append(len(gens))

    if not ranks or (started and ranks and ranks[-1] != len(gens)):
        ranks.append(len(gens))
    established_at = None
    final = ranks[-1]
    for i, r in enumerate(ranks):
        if r == final:
            established_at = i
            break
    return {
        "ranks": ranks,
        "established_round": established_at,
        "k": n - final,
    }


# ---------------------------------------------------------------------------
# single-error propagation


def propagate_single_error(c: Circuit, location: int, choice) -> dict:
    """Symptom of one noise outcome: violated detectors and flipped observables.

    `location` is the index of a noise instruction (Noise1/Noise2) or of a
    measurement with flip/em probability; `choice` selects the outcome —
    a Pauli label pair like ("X",) / ("X","Z") for channels, "flip" for a
    measurement flip, or ("X","I","flip") style tuples for the correlated
    entangling-measurement channel.
    """
    from . import frames

    return frames.single_error_symptom(c, location, choice)
