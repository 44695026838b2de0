"""Distance computation, Monte-Carlo rate estimation, and extrapolation.

`graphlike_distance` finds the exact minimum number of graph edges whose
combined symptom is empty but which flip a chosen observable (a parity
constrained shortest cycle, allowing chains terminating on the boundary).
`run_experiment` samples a circuit, decodes, and reports a logical error
rate with a likelihood-ratio interval.  `fit_extrapolate` fits
log-rate against a lattice dimension and extrapolates to a target rate,
with an uncertainty envelope from the set of near-optimal lines;
`teraquop_volume` turns three such fits into a qubit-volume estimate.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import framesim
from .circuit import Circuit
from .dem import BOUNDARY, MatchableGraph, build_dem, decompose


def graphlike_distance(g: MatchableGraph, observable: int = 0) -> float:
    """Fewest edges forming an undetectable set that flips the observable.

    Exact: breadth-first search over (vertex, observable parity) states,
    started from every vertex, looking for a closed walk of odd parity.
    The boundary counts as an ordinary vertex, so chains running from
    boundary to boundary are found too.  Returns ``math.inf`` when no such
    set exists.
    """
    bit = 1 << observable
    nb = g.n_detectors
    adj: list[list[tuple[int, int]]] = [[] for _ in range(nb + 1)]
    for e in g.edges:
        u = e.u
        v = nb if e.v == BOUNDARY else e.v
        par = 1 if (e.obs_mask & bit) else 0
        adj[u].append((v, par))
        adj[v].append((u, par))
    best = math.inf
    for start in range(nb + 1):
        dist = {(start, 0): 0}
        q = deque([(start, 0)])
        while q:
            node, par = q.popleft()
            d = dist[(node, par)]
            if d + 1 >= best:
                continue
            for nxt, epar in adj[node]:
                state = (nxt, par ^ epar)
                if state not in dist:
                    dist[state] = d + 1
                    if state == (start, 1):
                        best = min(best, d + 1)
                    q.append(state)
        if (start, 1) in dist:
            best = min(best, dist[(start, 1)])
    return best


def fault_distance(d, observable: int = 0) -> float:
    """Fewest error mechanisms forming an undetectable observable flip.

    Works on the full hypergraph (no decomposition), so remnant-edge
    counting artifacts of the decomposed graph cannot bias the result.
    Solved exactly as a binary integer program: one 0/1 variable per
    mechanism, an even-parity constraint per detector (via slack variables),
    and odd parity on the chosen observable.  Returns ``math.inf`` when no
    such mechanism set exists.
    """
    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import lil_matrix

    bit = 1 << observable
    mechs: dict[tuple[tuple[int, ...], int], None] = {}
    for m in d.mechanisms:
        mechs.setdefault((tuple(sorted(int(x) for x in m.detectors)), 1 if m.obs_mask & bit else 0))
    items = list(mechs)
    ne = len(items)
    rows = d_n = len(d.detectors)
    rows += 1
    a = lil_matrix((rows, ne + rows))
    for j, (ds, ob) in enumerate(items):
        for di in ds:
            a[di, j] = 1
        if ob:
            a[d_n, j] = 1
    for i in range(rows):
        a[i, ne + i] = -2  # slack: parity constraints as equalities
    rhs = np.zeros(rows)
    rhs[d_n] = 1
    res = milp(
        c=np.concatenate([np.ones(ne), np.zeros(rows)]),
        constraints=LinearConstraint(a.tocsc(), rhs, rhs),
        integrality=np.ones(ne + rows),
        bounds=Bounds(
            np.zeros(ne + rows),
            np.concatenate([np.ones(ne), np.full(rows, np.inf)]),
        ),
    )
    if not res.success:
        return math.inf
    return int(round(res.fun))


# ---------------------------------------------------------------------------
# Monte-Carlo logical error rates


@dataclass(frozen=True)
class ShotPolicy:
    max_shots: int = 10**6
    target_failures: int = 100
    batch: int = 4096


@dataclass(frozen=True)
class RatePoint:
    shots: int
    failures: int
    rate: float
    low: float
    high: float


def _likelihood_interval(shots: int, failures: int, ratio: float = 1000.0):
    """Binomial rate interval: all p whose likelihood is within `ratio` of max."""
    n, k = shots, failures
    if n == 0:
        return 0.0, 1.0

    def loglik(p):
        if p <= 0.0:
            return 0.0 if k == 0 else -math.inf
        if p >= 1.0:
            return 0.0 if k == n else -math.inf
        return k * math.log(p) + (n - k) * math.log(1.0 - p)

    phat = k / n
    cut = loglik(phat) - math.log(ratio)

    def bisect(lo, hi, rising):
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if (loglik(mid) >= cut) == rising:
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    low = 0.0 if loglik(0.0) >= cut else bisect(0.0, phat, rising=True)
    high = 1.0 if loglik(1.0) >= cut else bisect(phat, 1.0, rising=False)
    return low, high


def run_experiment(
    c: Circuit,
    decoder: str = "mwpm",
    seed: int = 0,
    policy: ShotPolicy = ShotPolicy(),
    observable: int = 0,
) -> RatePoint:
    """Sample, decode, and count logical failures on one observable.

    Stops at `policy.max_shots` shots or `policy.target_failures` failures,
    whichever comes first.  `decoder` is "mwpm" or "bm[:iterations]".
    """
    from . import decoder as dec

    d = build_dem(c)
    g = decompose(d)
    iters = 20
    if decoder.startswith("bm"):
        if ":" in decoder:
            iters = int(decoder.split(":", 1)[1])
        decode = lambda syn: dec.belief_match(d, g, syn, iters)  # noqa: E731
    elif decoder == "mwpm":
        decode = lambda syn: dec.mwpm_decode(g, syn)  # noqa: E731
    else:
        raise ValueError(f"unknown decoder {decoder!r}")

    shots = 0
    failures = 0
    block = 0
    bit = 1 << observable
    while shots < policy.max_shots and failures < policy.target_failures:
        n = min(policy.batch, policy.max_shots - shots)
        batch = framesim.sample(c, n, seed, first_block=block)
        block += framesim.blocks_for(n, policy.batch)
        dets = batch.detector_array()
        obs = batch.observable_array()
        for s in range(n):
            syn = np.flatnonzero(dets[s])
            pred = decode(syn.tolist()).obs_mask
            actual = int(obs[s, observable])
            if ((pred & bit) != 0) != bool(actual):
                failures += 1
        shots += n
    rate = failures / shots
    low, high = _likelihood_interval(shots, failures)
    return RatePoint(shots, failures, rate, low, high)


# ---------------------------------------------------------------------------
# fits and extrapolation


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    x: float
    x_low: float
    x_high: float
    points: tuple[tuple[float, float], ...] = field(default=())


def fit_extrapolate(points, target: float = 1e-12) -> FitResult:
    """Fit ln(rate) = a + b * dim and extrapolate to the target rate.

    `points` is a sequence of (dimension, rate) pairs with rate > 0.  The
    x_low / x_high bounds come from the two extreme lines whose residual sum
    of squares exceeds the optimum by at most 1.
    """
    pts = [(float(x), float(r)) for x, r in points]
    if len(pts) < 2:
        raise ValueError("need at least two points to extrapolate")
    if any(r <= 0.0 for _, r in pts):
        raise ValueError("rates must be positive for a log fit")
    xs = np.array([x for x, _ in pts])
    ys = np.log(np.array([r for _, r in pts]))
    xbar = xs.mean()
    ybar = ys.mean()
    sxx = float(((xs - xbar) ** 2).sum())
    if sxx == 0.0:
        raise ValueError("all points share one dimension")
    slope = float(((xs - xbar) * (ys - ybar)).sum() / sxx)
    intercept = float(ybar - slope * xbar)
    ystar = math.log(target)

    def crossing(b):
        if b >= 0.0:
            return math.inf
        return xbar + (ystar - ybar) / b

    # profiling out the intercept, SSE(b) = SSE* + (b - b_hat)^2 * sxx
    db = 1.0 / math.sqrt(sxx)
    x = crossing(slope)
    cands = (crossing(slope - db), crossing(slope + db))
    return FitResult(
        slope,
        intercept,
        x,
        min(cands),
        max(cands),
        tuple(pts),
    )


@dataclass(frozen=True)
class TeraquopEstimate:
    volume: float
    eps_low: float
    eps_high: float
    n_e: float
    n_m: float
    h: float


def teraquop_volume(
    fit_ne: FitResult,
    fit_nm: FitResult,
    fit_h_e: FitResult,
    fit_h_m: FitResult,
    footprint=lambda faces: 2.0 * faces,
) -> TeraquopEstimate:
    """Qubit-rounds needed for a 1e-12 logical rate in both observables.

    `footprint` maps a face count n_M * n_E to physical qubits; the default
    is the two-qubit-gate family (two data qubits per face).  Relative error
    bounds combine the per-dimension relative deviations in quadrature.
    """
    h = 0.5 * (fit_h_e.x + fit_h_m.x)
    vol = footprint(fit_nm.x * fit_ne.x) * h

    def rel(best, other):
        if not math.isfinite(best) or not math.isfinite(other) or best == 0.0:
            return math.inf
        return abs(other - best) / best

    h_hi = 0.5 * (fit_h_e.x_high + fit_h_m.x_high)
    h_lo = 0.5 * (fit_h_e.x_low + fit_h_m.x_low)
    eps_hi = math.sqrt(
        rel(fit_ne.x, fit_ne.x_high) ** 2
        + rel(fit_nm.x, fit_nm.x_high) ** 2
        + rel(h, h_hi) ** 2
    )
    eps_lo = math.sqrt(
        rel(fit_ne.x, fit_ne.x_low) ** 2
        + rel(fit_nm.x, fit_nm.x_low) ** 2
        + rel(h, h_lo) ** 2
    )
    return TeraquopEstimate(vol, eps_lo, eps_hi, fit_ne.x, fit_nm.x, h)


@dataclass(frozen=True)
class LinearityReport:
    slope: float
    intercept: float
    r_squared: float


def linearity_check(points) -> LinearityReport:
    """Least-squares line through (x, y) pairs, with the R^2 statistic."""
    xs = np.array([float(x) for x, _ in points])
    ys = np.array([float(y) for _, y in points])
    if len(xs) < 2:
        raise ValueError("need at least two points")
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = float(((ys - pred) ** 2).sum())
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return LinearityReport(float(slope), float(intercept), r2)
