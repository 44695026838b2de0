"""Monte-Carlo Pauli-frame sampler.

Shots are simulated in fixed blocks of 4096 with a counter-based RNG keyed on
(seed, block index), so the bits for shot i depend only on the seed and i.
Partitioning blocks across threads (or re-running with a different shot
count) therefore reproduces identical output byte for byte.

Within a block every noise instruction draws once, in instruction order,
with a fixed array shape; the last, partial block is simulated at full block
width and truncated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .circuit import (
    Circuit,
    Gate2,
    Measure1,
    MeasurePP,
    Noise1,
    Noise2,
    Reset,
)
from .frames import _PAULI_XZ, apply_gate2, record_matrices
from .schedule import Pauli

BLOCK = 4096

# the 15 non-identity two-qubit Paulis, in the channel's outcome order
_PAIRS = [
    (pa, pb) for pa in "IXYZ" for pb in "IXYZ" if not (pa == "I" and pb == "I")
]
_PAIR_XZ = np.array(
    [[*_PAULI_XZ[pa], *_PAULI_XZ[pb]] for pa, pb in _PAIRS], dtype=bool
)  # (15, 4): dx_a, dz_a, dx_b, dz_b

# the 31 outcomes of the correlated measurement channel: same label order as
# the symptom enumeration (Pauli pair crossed with an intrinsic flip,
# skipping identity-without-flip)
_EM_PAULIS = []
_EM_FLIPS = []
for _pa in "IXYZ":
    for _pb in "IXYZ":
        for _fl in (False, True):
            if _pa == "I" and _pb == "I" and not _fl:
                continue
            _EM_PAULIS.append([*_PAULI_XZ[_pa], *_PAULI_XZ[_pb]])
            _EM_FLIPS.append(_fl)
_EM_PAULIS = np.array(_EM_PAULIS, dtype=bool)  # (31, 4)
_EM_FLIPS = np.array(_EM_FLIPS, dtype=bool)  # (31,)


@dataclass
class ShotBatch:
    n_shots: int
    n_detectors: int
    n_observables: int
    det_bits: np.ndarray  # (n_shots, ceil(nd/8)) uint8, little-endian bits
    obs_bits: np.ndarray  # (n_shots, ceil(no/8)) uint8

    def detector_array(self) -> np.ndarray:
        out = np.unpackbits(self.det_bits, axis=1, bitorder="little")
        return out[:, : self.n_detectors].astype(bool)

    def observable_array(self) -> np.ndarray:
        out = np.unpackbits(self.obs_bits, axis=1, bitorder="little")
        return out[:, : self.n_observables].astype(bool)

    # -- b8-with-header container --------------------------------------------

    def save(self, path) -> None:
        header = {
            "format": "b8",
            "n_shots": self.n_shots,
            "n_detectors": self.n_detectors,
            "n_observables": self.n_observables,
        }
        with open(path, "wb") as f:
            f.write(b"dccc-shots " + json.dumps(header, sort_keys=True).encode() + b"\n")
            f.write(self.det_bits.tobytes())
            f.write(self.obs_bits.tobytes())

    @staticmethod
    def load(path) -> "ShotBatch":
        with open(path, "rb") as f:
            head = f.readline()
            if not head.startswith(b"dccc-shots "):
                raise ValueError(f"{path} is not a shot file")
            info = json.loads(head[len(b"dccc-shots ") :])
            ns = info["n_shots"]
            nd = info["n_detectors"]
            no = info["n_observables"]
            wd = -(-nd // 8)
            wo = -(-no // 8)
            det = np.frombuffer(f.read(ns * wd), dtype=np.uint8).reshape(ns, wd)
            obs = np.frombuffer(f.read(ns * wo), dtype=np.uint8).reshape(ns, wo)
        return ShotBatch(ns, nd, no, det, obs)


def blocks_for(n_shots: int, block: int = BLOCK) -> int:
    return -(-n_shots // block)


def _rng(seed: int, block: int) -> np.random.Generator:
    key = np.array([seed, block, 0, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _simulate_block(c: Circuit, rng: np.random.Generator, width: int) -> np.ndarray:
    """Measurement-flip table (width x n_meas) for one block."""
    n = c.n_qubits
    x = np.zeros((width, n), dtype=bool)
    z = np.zeros((width, n), dtype=bool)
    flips = np.zeros((width, c.num_measurements), dtype=bool)
    meas_i = 0
    for op in c.instructions:
        if isinstance(op, Noise1):
            total = op.p_x + op.p_y + op.p_z
            if total == 0.0:
                continue
            u = rng.random((width, len(op.qubits)))
            for col, q in enumerate(op.qubits):
                uq = u[:, col]
                is_x = uq < op.p_x
                is_y = (uq >= op.p_x) & (uq < op.p_x + op.p_y)
                is_z = (uq >= op.p_x + op.p_y) & (uq < total)
                x[:, q] ^= is_x | is_y
                z[:, q] ^= is_y | is_z
        elif isinstance(op, Noise2):
            if op.p == 0.0:
                continue
            u = rng.random(width)
            hit = u < op.p
            idx = np.minimum((u / (op.p / 15.0)).astype(np.int64), 14)
            sel = np.where(hit, idx, 0)
            dx_a, dz_a, dx_b, dz_b = (_PAIR_XZ[sel, k] & hit for k in range(4))
            a, b = op.qubits
            x[:, a] ^= dx_a
            z[:, a] ^= dz_a
            x[:, b] ^= dx_b
            z[:, b] ^= dz_b
        elif isinstance(op, Reset):
            qs = list(op.qubits)
            x[:, qs] = False
            z[:, qs] = False
        elif isinstance(op, Gate2):
            apply_gate2(op.kind, op.control, op.target, x, z)
        elif isinstance(op, Measure1):
            q = op.qubit
            if op.basis == Pauli.X:
                f = z[:, q].copy()
            elif op.basis == Pauli.Z:
                f = x[:, q].copy()
            else:
                f = x[:, q] ^ z[:, q]
            if op.flip_p:
                f ^= rng.random(width) < op.flip_p
            flips[:, meas_i] = f
            meas_i += 1
        elif isinstance(op, MeasurePP):
            a, b = op.qubits
            intrinsic = np.zeros(width, dtype=bool)
            if op.em_p:
                u = rng.random(width)
                hit = u < op.em_p
                idx = np.minimum((u / (op.em_p / 31.0)).astype(np.int64), 30)
                sel = np.where(hit, idx, 0)
                dx_a, dz_a, dx_b, dz_b = (
                    _EM_PAULIS[sel, k] & hit for k in range(4)
                )
                x[:, a] ^= dx_a
                z[:, a] ^= dz_a
                x[:, b] ^= dx_b
                z[:, b] ^= dz_b
                intrinsic ^= _EM_FLIPS[sel] & hit
            if op.pauli == Pauli.X:
                f = z[:, a] ^ z[:, b]
            elif op.pauli == Pauli.Z:
                f = x[:, a] ^ x[:, b]
            else:
                f = x[:, a] ^ z[:, a] ^ x[:, b] ^ z[:, b]
            f = f ^ intrinsic
            if op.flip_p:
                f ^= rng.random(width) < op.flip_p
            flips[:, meas_i] = f
            meas_i += 1
        # Gate1 / detector / observable / tick: no frame or record action
    return flips


def sample(c: Circuit, n_shots: int, seed: int, first_block: int = 0) -> ShotBatch:
    """Sample detector and observable bits for `n_shots` shots.

    Shot i (globally) lives in block `first_block + i // BLOCK`; the stream
    of random draws inside a block is a pure function of (seed, block), so
    output never depends on how shots are batched across calls or threads.
    """
    if n_shots < 1:
        raise ValueError("n_shots must be positive")
    rec_det, rec_obs = record_matrices(c)
    det_rows = []
    obs_rows = []
    remaining = n_shots
    block = first_block
    while remaining > 0:
        take = min(BLOCK, remaining)
        flips = _simulate_block(c, _rng(seed, block), BLOCK)[:take]
        fl = flips.astype(np.uint8)
        det_rows.append(np.asarray(fl @ rec_det.toarray(), dtype=np.uint8) % 2)
        obs_rows.append(np.asarray(fl @ rec_obs.toarray(), dtype=np.uint8) % 2)
        remaining -= take
        block += 1
    det = np.vstack(det_rows)
    obs = np.vstack(obs_rows)
    return ShotBatch(
        n_shots,
        rec_det.shape[1],
        rec_obs.shape[1],
        np.packbits(det, axis=1, bitorder="little"),
        np.packbits(obs, axis=1, bitorder="little"),
    )
