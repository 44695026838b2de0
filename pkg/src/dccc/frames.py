"""Vectorized Pauli-frame propagation through a circuit.

A frame is the Pauli difference between the noisy run and the ideal
reference run.  Frames commute through Cliffords by conjugation (signs are
irrelevant), resets clear them, and a measurement outcome is flipped exactly
when the frame anticommutes with the measured operator.  Everything here is
batched with numpy: a batch row per error mechanism (DEM construction) or
per shot (sampling).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .circuit import (
    Circuit,
    Detector,
    Gate1,
    Gate2,
    Measure1,
    MeasurePP,
    Noise1,
    Noise2,
    Observable,
    Reset,
)
from .schedule import Pauli

# per-qubit frame action of an outcome: bit 0 -> X component, bit 1 -> Z
_PAULI_XZ = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}


@dataclass(frozen=True)
class Outcome:
    label: str
    paulis: tuple[tuple[int, int, int], ...]  # (qubit, dx, dz)
    flip: bool  # intrinsic flip of the attached measurement
    p: float


@dataclass(frozen=True)
class Site:
    index: int  # dense site id
    pos: int  # instruction index in the circuit
    kind: str  # noise1 / noise2 / flip / em
    qubit: int | None  # for noise1 sites
    outcomes: tuple[Outcome, ...]


def _two_qubit_outcomes(qubits, p_each, with_flip):
    a, b = qubits
    labels = []
    for pa in "IXYZ":
        for pb in "IXYZ":
            for fl in ((False, True) if with_flip else (False,)):
                if pa == "I" and pb == "I" and not fl:
                    continue
                labels.append((pa, pb, fl))
    out = []
    for pa, pb, fl in labels:
        paulis = []
        if pa != "I":
            paulis.append((a, *_PAULI_XZ[pa]))
        if pb != "I":
            paulis.append((b, *_PAULI_XZ[pb]))
        name = f"{pa}{pb}" + ("*flip" if fl else "")
        out.append(Outcome(name, tuple(paulis), fl, p_each))
    return tuple(out)


def enumerate_sites(c: Circuit) -> list[Site]:
    """All independent noise locations with their outcome spaces."""
    sites: list[Site] = []

    def add(pos, kind, qubit, outcomes):
        sites.append(Site(len(sites), pos, kind, qubit, tuple(outcomes)))

    for pos, op in enumerate(c.instructions):
        if isinstance(op, Noise1):
            for q in op.qubits:
                if op.p_x or op.p_y or op.p_z:
                    add(
                        pos,
                        "noise1",
                        q,
                        [
                            Outcome("X", ((q, 1, 0),), False, op.p_x),
                            Outcome("Y", ((q, 1, 1),), False, op.p_y),
                            Outcome("Z", ((q, 0, 1),), False, op.p_z),
                        ],
                    )
        elif isinstance(op, Noise2):
            if op.p:
                add(pos, "noise2", None, _two_qubit_outcomes(op.qubits, op.p / 15.0, False))
        elif isinstance(op, Measure1):
            if op.flip_p:
                add(pos, "flip", None, [Outcome("flip", (), True, op.flip_p)])
        elif isinstance(op, MeasurePP):
            if op.em_p:
                add(pos, "em", None, _two_qubit_outcomes(op.qubits, op.em_p / 31.0, True))
            if op.flip_p:
                add(pos, "flip", None, [Outcome("flip", (), True, op.flip_p)])
    return sites


def _measure_flip(op, x, z):
    """Boolean flip vector for a Measure1/MeasurePP given frame arrays."""
    if isinstance(op, Measure1):
        pairs = [(op.qubit, op.basis)]
    else:
        pairs = [(q, op.pauli) for q in op.qubits]
    flip = None
    for q, basis in pairs:
        if basis == Pauli.X:
            f = z[:, q]
        elif basis == Pauli.Z:
            f = x[:, q]
        else:
            f = x[:, q] ^ z[:, q]
        flip = f.copy() if flip is None else (flip ^ f)
    return flip


def apply_gate2(kind: Pauli, c: int, t: int, x: np.ndarray, z: np.ndarray) -> None:
    if kind == Pauli.X:
        x[:, t] ^= x[:, c]
        z[:, c] ^= z[:, t]
    elif kind == Pauli.Z:
        z[:, t] ^= x[:, c]
        z[:, c] ^= x[:, t]
    else:  # CY
        z[:, c] ^= x[:, t] ^ z[:, t]
        x[:, t] ^= x[:, c]
        z[:, t] ^= x[:, c]


def record_matrices(c: Circuit):
    """Sparse (n_meas x n_det) and (n_meas x n_obs) record incidence matrices."""
    n_meas = c.num_measurements
    det_cols: list[tuple[int, int]] = []
    obs_cols: list[tuple[int, int]] = []
    n_det = n_obs = 0
    for op in c.instructions:
        if isinstance(op, Detector):
            det_cols.extend((k, n_det) for k in op.records)
            n_det += 1
        elif isinstance(op, Observable):
            obs_cols.extend((k, n_obs) for k in op.records)
            n_obs += 1

    def mk(pairs, ncols):
        if not pairs:
            return sparse.csr_matrix((n_meas, ncols), dtype=np.uint8)
        rows, cols = zip(*pairs)
        data = np.ones(len(rows), dtype=np.uint8)
        return sparse.csr_matrix((data, (rows, cols)), shape=(n_meas, ncols))

    return mk(det_cols, n_det), mk(obs_cols, n_obs)


def unit_symptoms(c: Circuit, sites: list[Site] | None = None):
    """Propagate one unit frame per (site, outcome).

    Returns (sites, rows) where rows is a list of
    (site_index, outcome_index, probability, detector index tuple, obs mask).
    """
    if sites is None:
        sites = enumerate_sites(c)
    row_meta: list[tuple[int, int, float]] = []
    by_pos: dict[int, list[tuple[int, Site, Outcome]]] = {}
    for s in sites:
        for oi, out in enumerate(s.outcomes):
            rid = len(row_meta)
            row_meta.append((s.index, oi, out.p))
            by_pos.setdefault(s.pos, []).append((rid, s, out))

    n_rows = len(row_meta)
    n = c.n_qubits
    x = np.zeros((n_rows, n), dtype=bool)
    z = np.zeros((n_rows, n), dtype=bool)
    flip_entries_r: list[np.ndarray] = []
    flip_entries_m: list[np.ndarray] = []
    meas_i = 0

    for pos, op in enumerate(c.instructions):
        intrinsic: list[int] = []
        if pos in by_pos:
            for rid, _site, out in by_pos[pos]:
                for q, dx, dz in out.paulis:
                    if dx:
                        x[rid, q] ^= True
                    if dz:
                        z[rid, q] ^= True
                if out.flip:
                    intrinsic.append(rid)
        if isinstance(op, Reset):
            qs = list(op.qubits)
            x[:, qs] = False
            z[:, qs] = False
        elif isinstance(op, Gate2):
            apply_gate2(op.kind, op.control, op.target, x, z)
        elif isinstance(op, (Measure1, MeasurePP)):
            flip = _measure_flip(op, x, z)
            if intrinsic:
                flip = flip.copy()
                flip[intrinsic] ^= True
            rows = np.nonzero(flip)[0]
            if rows.size:
                flip_entries_r.append(rows)
                flip_entries_m.append(np.full(rows.size, meas_i, dtype=np.int64))
            meas_i += 1
        # Gate1 / noise / detector / observable / tick: no frame action

    if flip_entries_r:
        rr = np.concatenate(flip_entries_r)
        mm = np.concatenate(flip_entries_m)
        flips = sparse.csr_matrix(
            (np.ones(rr.size, dtype=np.uint8), (rr, mm)), shape=(n_rows, meas_i)
        )
    else:
        flips = sparse.csr_matrix((n_rows, meas_i), dtype=np.uint8)

    rec_det, rec_obs = record_matrices(c)
    det_hits = (flips @ rec_det).tocsr()
    det_hits.data %= 2
    det_hits.eliminate_zeros()
    obs_hits = (flips @ rec_obs).tocsr()
    obs_hits.data %= 2
    obs_hits.eliminate_zeros()

    rows = []
    for rid, (si, oi, p) in enumerate(row_meta):
        dets = tuple(det_hits.indices[det_hits.indptr[rid] : det_hits.indptr[rid + 1]])
        obs = 0
        for ob in obs_hits.indices[obs_hits.indptr[rid] : obs_hits.indptr[rid + 1]]:
            obs |= 1 << int(ob)
        rows.append((si, oi, p, dets, obs))
    return sites, rows


def single_error_symptom(c: Circuit, location: int, choice) -> dict:
    """Symptom of a single noise outcome at instruction index `location`."""
    sites = [s for s in enumerate_sites(c) if s.pos == location]
    if not sites:
        raise ValueError(f"instruction {location} is not a noise site")
    if choice == "flip" or choice == ("flip",):
        label = "flip"
    elif isinstance(choice, (tuple, list)):
        flip = "flip" in choice
        pl = [t for t in choice if t != "flip"]
        label = "".join(pl) + ("*flip" if flip else "")
    else:
        label = str(choice)
    for s in sites:
        for oi, out in enumerate(s.outcomes):
            if out.label == label or (s.kind == "noise1" and out.label == label):
                _, rows = unit_symptoms(c, sites=[Site(0, s.pos, s.kind, s.qubit, s.outcomes)])
                for _si, roi, _p, dets, obs in rows:
                    if roi == oi:
                        return {"detectors": tuple(int(d) for d in dets), "observables": obs}
    raise ValueError(f"no outcome {label!r} at instruction {location}")
