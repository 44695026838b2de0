"""Detector error models: construction, decomposition, labels, metrics.

`build_dem` turns every independent noise outcome of a circuit into an error
mechanism (violated detectors + observable mask + probability), merging
duplicates.  `decompose` reduces the hypergraph to a matchable graph with a
virtual boundary vertex and remnant edges.  `label_components` names the two
components of the boundary-deleted graph, and `structural_metrics` reports
detector volume / measurement / degree statistics and hyperedge likelihoods.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .circuit import Circuit, Detector, Gate2, Measure1, MeasurePP, Tick
from .frames import unit_symptoms
from .lattice import Colour
from .schedule import parse_schedule


class DecompositionError(ValueError):
    pass


def _xor_p(p1: float, p2: float) -> float:
    return p1 * (1.0 - p2) + p2 * (1.0 - p1)


@dataclass(frozen=True)
class Mechanism:
    p: float
    detectors: tuple[int, ...]
    obs_mask: int


@dataclass
class DetectorErrorModel:
    detectors: list[Detector]
    mechanisms: list[Mechanism]
    n_observables: int
    metadata: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = []
        if self.metadata:
            lines.append("# " + json.dumps(self.metadata, sort_keys=True))
        for i, det in enumerate(self.detectors):
            coords = ", ".join(repr(float(x)) for x in det.coords)
            kind = 0.0 if det.kind == "face" else 1.0
            lines.append(f"detector({coords}, {kind!r}) D{i}")
        for m in self.mechanisms:
            parts = [f"D{d}" for d in m.detectors]
            parts += [f"L{i}" for i in range(self.n_observables) if m.obs_mask >> i & 1]
            lines.append(f"error({m.p!r}) " + " ".join(parts))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "DetectorErrorModel":
        detectors: list[Detector] = []
        mechanisms: list[Mechanism] = []
        metadata: dict = {}
        n_obs = 0
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                metadata = json.loads(line[1:].strip())
                continue
            head, _, rest = line.partition(")")
            name, _, args = head.partition("(")
            if name == "detector":
                vals = [float(v) for v in args.split(",")]
                kind = "face" if vals[-1] == 0.0 else "edge"
                detectors.append(Detector((), tuple(vals[:-1]), kind))
            elif name == "error":
                p = float(args)
                dets = []
                mask = 0
                for tok in rest.split():
                    if tok.startswith("D"):
                        dets.append(int(tok[1:]))
                    elif tok.startswith("L"):
                        i = int(tok[1:])
                        mask |= 1 << i
                        n_obs = max(n_obs, i + 1)
                mechanisms.append(Mechanism(p, tuple(dets), mask))
            else:
                raise ValueError(f"unrecognized DEM line: {line}")
        return DetectorErrorModel(detectors, mechanisms, n_obs, metadata)


def build_dem(c: Circuit) -> DetectorErrorModel:
    """One merged mechanism per distinct (detector set, observable mask)."""
    merged: dict[tuple[tuple[int, ...], int], float] = {}
    _sites, rows = unit_symptoms(c)
    for _si, _oi, p, dets, obs in rows:
        if p == 0.0 or (not dets and not obs):
            continue
        key = (tuple(sorted(dets)), obs)
        merged[key] = _xor_p(merged.get(key, 0.0), p)
    mechanisms = []
    for (dets, obs), p in sorted(merged.items()):
        if p > 0.5:
            raise ValueError(
                f"merged mechanism {dets} has probability {p} > 0.5"
            )
        mechanisms.append(Mechanism(p, dets, obs))
    return DetectorErrorModel(
        list(c.detectors()), mechanisms, len(c.observables()), dict(c.metadata)
    )


# ---------------------------------------------------------------------------
# decomposition to a matchable graph

BOUNDARY = -1  # boundary vertex id in edge endpoint tuples


@dataclass
class GraphEdge:
    u: int
    v: int  # BOUNDARY for the virtual boundary vertex
    p: float
    obs_mask: int
    provenance: str  # real / remnant
    sources: list[int] = field(default_factory=list)  # mechanism indices

    @property
    def weight(self) -> float:
        return math.log((1.0 - self.p) / self.p)


@dataclass
class MatchableGraph:
    n_detectors: int
    edges: list[GraphEdge]
    detectors: list[Detector]
    metadata: dict = field(default_factory=dict)

    def incident(self) -> list[list[int]]:
        inc: list[list[int]] = [[] for _ in range(self.n_detectors + 1)]
        for i, e in enumerate(self.edges):
            inc[e.u].append(i)
            inc[self.n_detectors if e.v == BOUNDARY else e.v].append(i)
        return inc


def _pairings(dets: tuple[int, ...]):
    """All partitions of `dets` into pairs and singletons, smallest-first."""
    if not dets:
        yield []
        return
    first, rest = dets[0], dets[1:]
    for i in range(len(rest)):
        for tail in _pairings(rest[:i] + rest[i + 1 :]):
            yield [(first, rest[i])] + tail
    for tail in _pairings(rest):
        yield [(first,)] + tail


def _select_exact(cands, masks, target):
    """Pick one index from each non-None candidate list so masks XOR to target.

    Candidate lists are searched in order, so the first (lowest-index) exact
    assignment wins.  Components without candidates contribute mask 0.
    """
    lists = [cl for cl in cands if cl is not None]

    def go(k, acc):
        if k == len(lists):
            return [] if acc == target else None
        for ei in lists[k]:
            tail = go(k + 1, acc ^ masks[ei])
            if tail is not None:
                return [ei] + tail
        return None

    flat = go(0, 0)
    if flat is None:
        return None
    it = iter(flat)
    return [next(it) if cl is not None else None for cl in cands]


def decompose(d: DetectorErrorModel) -> MatchableGraph:
    """Reduce the mechanism hypergraph to a boundary-augmented matchable graph.

    Graphlike mechanisms (one or two detectors) become edges directly, merged
    when symptom and observable mask coincide.  Each hyperedge is split into
    pairs/singletons of its own detectors, preferring splits whose components
    are individually present as graphlike *mechanisms* (remnant edges created
    by earlier hyperedges do not count) with observable masks XOR-matching
    exactly, then splits needing the fewest remnant edges; an unmatched
    residual mask is carried by the first remnant only as a last resort.
    """
    edges: list[GraphEdge] = []
    real_by_pair: dict[tuple[int, int], list[int]] = {}
    by_pair_obs: dict[tuple[int, int, int], int] = {}

    def pair_key(comp):
        return (comp[0], comp[1] if len(comp) == 2 else BOUNDARY)

    def add_edge(u, v, p, obs, prov, src):
        edges.append(GraphEdge(u, v, p, obs, prov, [src]))
        if prov == "real":
            real_by_pair.setdefault((u, v), []).append(len(edges) - 1)
        return len(edges) - 1

    hypers = []
    for mi, m in enumerate(d.mechanisms):
        if not m.detectors:
            continue  # undetectable; nothing for a matching decoder to use
        if len(m.detectors) <= 2:
            u, v = pair_key(m.detectors)
            key = (u, v, m.obs_mask)
            ei = by_pair_obs.get(key)
            if ei is None:
                by_pair_obs[key] = add_edge(u, v, m.p, m.obs_mask, "real", mi)
            else:
                edges[ei].p = _xor_p(edges[ei].p, m.p)
                edges[ei].sources.append(mi)
        else:
            hypers.append(mi)

    for mi in hypers:
        m = d.mechanisms[mi]
        masks = [e.obs_mask for e in edges]
        best = None  # (n_remnants, has residual, pairing order) -> assignment
        for oi, pairing in enumerate(_pairings(m.detectors)):
            cands = [real_by_pair.get(pair_key(comp)) for comp in pairing]
            n_rem = sum(1 for cl in cands if cl is None)
            if best is not None and best[0] < (n_rem, False, oi):
                continue
            sel = _select_exact(cands, masks, m.obs_mask)
            if sel is not None:
                score = (n_rem, False, oi)
                resid = 0
            else:
                if not n_rem:
                    continue
                sel = [cl[0] if cl is not None else None for cl in cands]
                resid = m.obs_mask
                for ei in sel:
                    if ei is not None:
                        resid ^= masks[ei]
                score = (n_rem, True, oi)
            if best is None or score < best[0]:
                best = (score, pairing, sel, resid)
        if best is None:
            raise DecompositionError(
                f"mechanism {m.detectors} admits no observable-consistent decomposition"
            )
        _score, pairing, sel, resid = best
        for j, comp in enumerate(pairing):
            if sel[j] is not None:
                e = edges[sel[j]]
                e.p = _xor_p(e.p, m.p)
                e.sources.append(mi)
            else:
                u, v = pair_key(comp)
                obs = resid
                resid = 0  # residual mask carried by the first remnant
                key = (u, v, obs)
                ei = by_pair_obs.get(key)
                if ei is None:
                    by_pair_obs[key] = add_edge(u, v, m.p, obs, "remnant", mi)
                else:
                    edges[ei].p = _xor_p(edges[ei].p, m.p)
                    edges[ei].sources.append(mi)

    n_det = len(d.detectors)
    return MatchableGraph(n_det, edges, list(d.detectors), dict(d.metadata))


# ---------------------------------------------------------------------------
# component labels


def _components(g: MatchableGraph) -> dict[int, int]:
    """Component id per detector, ignoring detectors with no incident edge.

    Detectors in noiseless padding rounds have no error mechanism touching
    them; they belong to neither component and are left out of the map.
    """
    parent = list(range(g.n_detectors))
    touched = set()

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in g.edges:
        touched.add(e.u)
        if e.v == BOUNDARY:
            continue
        touched.add(e.v)
        ra, rb = find(e.u), find(e.v)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = sorted({find(i) for i in touched})
    root_id = {r: i for i, r in enumerate(roots)}
    return {i: root_id[find(i)] for i in sorted(touched)}


def label_components(g: MatchableGraph, raw: bool = False) -> dict[int, object]:
    """Two-colour the boundary-deleted graph; name the components E and M.

    With `raw=True` returns anonymous component ids (0/1 by lowest detector
    index).  The E/M naming requires schedule context from the graph
    metadata; without it the lower component id is called E.
    """
    comp = _components(g)
    n = len(set(comp.values()))
    if n != 2:
        raise ValueError(f"expected 2 components without the boundary, found {n}")
    if raw:
        return comp
    names = {0: "E", 1: "M"}
    meta = g.metadata
    if meta.get("schedule") and meta.get("n_E") is not None:
        from .builder import calibrate

        s = parse_schedule(meta["schedule"])
        phases = calibrate(s)["phase_labels"]
        period = s.rounds_per_period
        votes: dict[int, set] = {0: set(), 1: set()}
        for di, det in enumerate(g.detectors):
            if det.kind != "face":
                continue
            col, row, t = det.coords[:3]
            key = (Colour((int(col) + 2 * int(row)) % 3), int(t) % (2 * period))
            if key in phases:
                votes[comp[di]].add(phases[key])
        if all(len(v) == 1 for v in votes.values()) and votes[0] != votes[1]:
            names = {ci: votes[ci].pop() for ci in (0, 1)}
    return {di: names[ci] for di, ci in comp.items()}


def mechanism_labels(d: DetectorErrorModel, g: MatchableGraph) -> list[str]:
    """E / M / F per mechanism; F (fermion) mechanisms span both components."""
    labels = label_components(g)
    out = []
    for m in d.mechanisms:
        hit = {labels[di] for di in m.detectors}
        if not hit:
            out.append("F")
        else:
            out.append(hit.pop() if len(hit) == 1 else "F")
    return out


# ---------------------------------------------------------------------------
# structural metrics


def _measurement_rounds_and_qubits(c: Circuit):
    """Per measurement: (round index, involved data qubits)."""
    meta = c.metadata
    n_data = 2 * meta["n_M"] * meta["n_E"] if "n_M" in meta else c.n_qubits
    aux_targets: dict[int, set[int]] = {}
    out = []
    t = 0
    for op in c.instructions:
        if isinstance(op, Tick):
            t += 1
            aux_targets.clear()
        elif isinstance(op, Gate2):
            aux_targets.setdefault(op.control, set()).add(op.target)
        elif isinstance(op, Measure1):
            if op.qubit < n_data:
                out.append((t, frozenset({op.qubit})))
            else:
                out.append((t, frozenset(aux_targets.get(op.qubit, set()))))
        elif isinstance(op, MeasurePP):
            out.append((t, frozenset(op.qubits)))
    return out


def _stats(values):
    vals = list(values)
    if not vals:
        return {"min": None, "max": None, "avg": None}
    return {"min": min(vals), "max": max(vals), "avg": sum(vals) / len(vals)}


def _detector_local_metrics(c: Circuit, g: MatchableGraph):
    info = _measurement_rounds_and_qubits(c)
    vols, meas, spans = [], [], []
    for det in c.detectors():
        rounds = [info[k][0] for k in det.records]
        qubits = set()
        for k in det.records:
            qubits |= info[k][1]
        span = max(rounds) - min(rounds) + 1
        vols.append(span * len(qubits))
        meas.append(len(det.records))
        spans.append((min(rounds), max(rounds)))
    degs = [len(inc) for inc in g.incident()[:-1]]
    return vols, meas, degs, spans


def structural_metrics(c: Circuit, d: DetectorErrorModel, g: MatchableGraph) -> dict:
    """Volume / measurement / degree statistics plus hyperedge likelihoods.

    Global statistics come from the inputs; bulk statistics and per-family
    hyperedge likelihoods are computed on an internally extended four-period
    block of the same schedule and lattice so time boundaries cannot leak in.
    """
    vols, meas, degs, _spans = _detector_local_metrics(c, g)
    n_hyper = sum(1 for m in d.mechanisms if len(m.detectors) > 2)
    out = {
        "n_detectors": len(d.detectors),
        "n_mechanisms": len(d.mechanisms),
        "volume": _stats(vols),
        "measurements_per_detector": _stats(meas),
        "degree": _stats(degs),
        "hyperedge_fraction_merged": n_hyper / len(d.mechanisms) if d.mechanisms else 0.0,
    }

    meta = c.metadata
    if not meta.get("schedule"):
        return out

    from .builder import build_experiment
    from .circuit import ExperimentSpec, Phenomenological
    from .lattice import build_lattice

    s = parse_schedule(meta["schedule"])
    period = s.rounds_per_period
    lat = build_lattice(meta["n_M"], meta["n_E"])
    h = 4 * period
    kind = meta.get("kind", "memory_e")
    p = 1e-3
    cx = build_experiment(
        lat,
        s,
        ExperimentSpec(kind, h, "two_qubit_measurement"),
        Phenomenological(p, p, p, p),
    )
    dx = build_dem(cx)
    gx = decompose(dx)
    volsx, measx, degsx, spansx = _detector_local_metrics(cx, gx)

    detsx = cx.detectors()
    bulk = [
        i
        for i, det in enumerate(detsx)
        if 2 * period <= det.coords[2] < 3 * period and spansx[i][0] >= 1
    ]
    out["bulk"] = {
        "volume": _stats(volsx[i] for i in bulk),
        "measurements_per_detector": _stats(measx[i] for i in bulk),
        "degree": _stats(degsx[i] for i in bulk),
        "n_detectors": len(bulk),
    }

    # hyperedge likelihoods per noise family, over a central period of sites
    sites, rows = unit_symptoms(cx)
    pos_round = {}
    t = 0
    for pos, op in enumerate(cx.instructions):
        pos_round[pos] = t
        if isinstance(op, Tick):
            t += 1
    n_data = 2 * meta["n_M"] * meta["n_E"]
    counts = {"phenomenological": [0, 0], "measurement": [0, 0], "z": [0, 0]}
    site_by_index = {s_.index: s_ for s_ in sites}
    for si, oi, p_, dets, _obs in rows:
        site = site_by_index[si]
        t = pos_round[site.pos]
        if not period <= t < 2 * period:
            continue
        hyper = len(dets) > 2
        if site.kind == "noise1" and site.qubit is not None and site.qubit < n_data:
            counts["phenomenological"][0] += 1
            counts["phenomenological"][1] += hyper
            if oi == 2:
                counts["z"][0] += 1
                counts["z"][1] += hyper
        elif site.kind == "flip":
            counts["measurement"][0] += 1
            counts["measurement"][1] += hyper
    out["p_h"] = {
        fam: (n_h / n_tot if n_tot else None) for fam, (n_tot, n_h) in counts.items()
    }
    return out
