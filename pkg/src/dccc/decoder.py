"""Decoders on the matchable graph / detector error model.

`mwpm_decode` is exact: pairwise distances between marked detectors (and the
boundary) come from Dijkstra, the reduced matching problem is solved exactly
(bitmask dynamic programming for small syndromes, blossom via networkx
otherwise), and matched pairs are expanded back into graph edges.
`bp_marginals` runs flooding sum-product on the mechanism-detector Tanner
graph; `belief_match` reweights the graph with those marginals before
matching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .dem import BOUNDARY, DetectorErrorModel, MatchableGraph

_CLAMP_LO = 1e-12
_CLAMP_HI = 0.5 - 1e-12


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class Correction:
    edges: tuple[int, ...]  # graph edge indices, with multiplicity
    obs_mask: int
    weight: float


def _best_edge_lookup(g: MatchableGraph):
    """Minimum-weight edge index per vertex pair (boundary = n_detectors)."""
    nb = g.n_detectors
    best: dict[tuple[int, int], int] = {}
    for i, e in enumerate(g.edges):
        v = nb if e.v == BOUNDARY else e.v
        key = (min(e.u, v), max(e.u, v))
        j = best.get(key)
        if j is None or e.weight < g.edges[j].weight:
            best[key] = i
    return best


def _adjacency(g: MatchableGraph, best):
    nb = g.n_detectors
    rows, cols, vals = [], [], []
    for (u, v), i in best.items():
        rows.append(u)
        cols.append(v)
        vals.append(g.edges[i].weight)
    m = coo_matrix((vals, (rows, cols)), shape=(nb + 1, nb + 1))
    return m.tocsr()


def _match_dp(dist):
    """Exact minimum-weight matching allowing boundary passes.

    dist is a (k+1) x (k+1) array; index k is the boundary, which can absorb
    any number of vertices.  Returns (total weight, pairing list) where a
    pairing entry is (i, j) or (i, None) for a boundary match.
    """
    k = dist.shape[0] - 1
    full = (1 << k) - 1
    dp = np.full(1 << k, np.inf)
    choice: list[tuple[int, int | None] | None] = [None] * (1 << k)
    dp[0] = 0.0
    for mask in range(1, 1 << k):
        i = (mask & -mask).bit_length() - 1
        base = mask & ~(1 << i)
        w = dp[base] + dist[i, k]
        best = (w, (i, None))
        rest = base
        while rest:
            j = (rest & -rest).bit_length() - 1
            rest &= rest - 1
            w = dp[base & ~(1 << j)] + dist[i, j]
            if w < best[0]:
                best = (w, (i, j))
        dp[mask] = best[0]
        choice[mask] = best[1]
    if not math.isfinite(dp[full]):
        raise DecodeError("infeasible syndrome: marked detectors unreachable")
    pairs = []
    mask = full
    while mask:
        pair = choice[mask]
        pairs.append(pair)
        i, j = pair
        mask &= ~(1 << i)
        if j is not None:
            mask &= ~(1 << j)
    return float(dp[full]), pairs


def _match_blossom(dist):
    import networkx as nx

    k = dist.shape[0] - 1
    G = nx.Graph()
    big = float(np.nanmax(np.where(np.isfinite(dist), dist, np.nan))) + 1.0
    for i in range(k):
        for j in range(i + 1, k):
            if math.isfinite(dist[i, j]):
                G.add_edge(i, j, weight=big - dist[i, j])
        if math.isfinite(dist[i, k]):
            G.add_edge(i, ("b", i), weight=big - dist[i, k])
    for i in range(k):
        for j in range(i + 1, k):
            G.add_edge(("b", i), ("b", j), weight=big)
    matching = nx.max_weight_matching(G, maxcardinality=True)
    matched = set()
    pairs = []
    total = 0.0
    for a, b in matching:
        if isinstance(a, tuple) and isinstance(b, tuple):
            continue
        if isinstance(a, tuple):
            a, b = b, a
        if isinstance(b, tuple):
            pairs.append((a, None))
            total += dist[a, k]
            matched.add(a)
        else:
            pairs.append((a, b))
            total += dist[a, b]
            matched.update((a, b))
    if len(matched) != k:
        raise DecodeError("infeasible syndrome: matching left unmatched detectors")
    return total, pairs


def mwpm_decode(g: MatchableGraph, syndrome) -> Correction:
    marked = sorted(set(syndrome))
    if not marked:
        return Correction((), 0, 0.0)
    nb = g.n_detectors
    if any(v < 0 or v >= nb for v in marked):
        raise DecodeError("syndrome names a vertex outside the graph")
    best = _best_edge_lookup(g)
    adj = _adjacency(g, best)
    nodes = marked + [nb]
    dmat, pred = dijkstra(
        adj, directed=False, indices=nodes, return_predecessors=True
    )
    k = len(marked)
    dist = np.full((k + 1, k + 1), np.inf)
    for a in range(k + 1):
        for b in range(k + 1):
            dist[a, b] = dmat[a, nodes[b]]
    if k <= 14:
        total, pairs = _match_dp(dist)
    else:
        total, pairs = _match_blossom(dist)

    edges: list[int] = []
    obs = 0
    for i, j in pairs:
        src_row = i
        target = nodes[j] if j is not None else nb
        cur = target
        start = nodes[i]
        while cur != start:
            prv = pred[src_row, cur]
            if prv < 0:
                raise DecodeError("infeasible syndrome: no path to boundary")
            key = (min(prv, cur), max(prv, cur))
            ei = best[key]
            edges.append(ei)
            obs ^= g.edges[ei].obs_mask
            cur = prv
    return Correction(tuple(sorted(edges)), obs, total)


# ---------------------------------------------------------------------------
# belief propagation


def bp_marginals(d: DetectorErrorModel, syndrome, iterations: int) -> list[float]:
    """Flooding sum-product marginals for each mechanism given the syndrome."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    syn = set(syndrome)
    n_mech = len(d.mechanisms)
    # variable/factor incidence
    var_factors: list[list[int]] = [[] for _ in range(n_mech)]
    factor_vars: dict[int, list[int]] = {}
    for mi, m in enumerate(d.mechanisms):
        for di in m.detectors:
            var_factors[mi].append(di)
            factor_vars.setdefault(di, []).append(mi)

    prior_llr = {}
    for mi, m in enumerate(d.mechanisms):
        p = min(max(m.p, _CLAMP_LO), _CLAMP_HI)
        prior_llr[mi] = math.log((1.0 - p) / p)

    # messages as log-likelihood ratios L = ln P(0)/P(1)
    msg_vf = {(mi, di): prior_llr[mi] for mi in range(n_mech) for di in var_factors[mi]}
    msg_fv = {key: 0.0 for key in msg_vf}

    def clip(x):
        return max(-50.0, min(50.0, x))

    for _ in range(iterations):
        for di, (vs) in factor_vars.items():
            s = -1.0 if di in syn else 1.0
            tanhs = [math.tanh(clip(msg_vf[(mi, di)]) / 2.0) for mi in vs]
            for idx, mi in enumerate(vs):
                prod = s
                for jdx, t in enumerate(tanhs):
                    if jdx != idx:
                        prod *= t
                prod = min(max(prod, -1.0 + 1e-15), 1.0 - 1e-15)
                msg_fv[(mi, di)] = 2.0 * math.atanh(prod)
        for mi in range(n_mech):
            for di in var_factors[mi]:
                total = prior_llr[mi]
                for dj in var_factors[mi]:
                    if dj != di:
                        total += msg_fv[(mi, dj)]
                msg_vf[(mi, di)] = clip(total)

    out = []
    for mi in range(n_mech):
        llr = prior_llr[mi] + sum(msg_fv[(mi, di)] for di in var_factors[mi])
        out.append(1.0 / (1.0 + math.exp(clip(llr))))
    return out


def belief_match(
    d: DetectorErrorModel, g: MatchableGraph, syndrome, iterations: int = 20
) -> Correction:
    if iterations == 0:
        return mwpm_decode(g, syndrome)
    marg = bp_marginals(d, syndrome, iterations)
    import copy

    g2 = MatchableGraph(g.n_detectors, copy.deepcopy(g.edges), g.detectors, g.metadata)
    for e in g2.edges:
        q = 0.0
        for mi in e.sources:
            m = marg[mi]
            q = q * (1.0 - m) + m * (1.0 - q)
        e.p = min(max(q, _CLAMP_LO), _CLAMP_HI)
    return mwpm_decode(g2, syndrome)
