"""Exact path simulation of finite-activity MAPs.

Paths are generated segment by segment: on each holding interval the state is
fixed and X is a Brownian motion with drift (or a line when sigma = 0).  The
segment ends at the next chain transition, the next per-state jump, or the
killing/horizon time.  Extremes inside a diffusion segment come from the
Brownian bridge between the endpoints:

    P(max > m | x0, x1) = exp(-2 (m - x0)(m - x1) / (sigma^2 d)),

and, given the maximum, the location theta has u = theta / (d - theta) with
density proportional to u^{-3/2} (1 + u) exp(-A/u - B u), a two-term mixture of
an inverse Gaussian and a reciprocal inverse Gaussian.

Replications are grouped into fixed-size blocks, each with its own
counter-based stream keyed by (seed, block), so results do not depend on the
number of worker threads.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainViolation, EmptyCell
from .model import ValidatedModel

BLOCK_SIZE = 8192


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


# ---------------------------------------------------------------------------
# per-model constants

@dataclass(frozen=True, eq=False)
class _Params:
    n: int
    a: np.ndarray
    s2: np.ndarray
    sig: np.ndarray
    q_out: np.ndarray      # -q_ii
    levy_rate: np.ndarray  # total per-state jump rate
    rate: np.ndarray       # total event rate
    trans_cdf: np.ndarray  # row-wise CDF of the jump chain
    levy_cdf: list         # per state: CDF over jump components
    model: ValidatedModel


@lru_cache(maxsize=64)
def _params_cached(model: ValidatedModel) -> _Params:
    n = model.n_states
    Q = model.Q
    q_out = -np.diag(Q).copy()
    P = np.zeros((n, n))
    for i in range(n):
        if q_out[i] > 0:
            P[i] = np.where(np.arange(n) == i, 0.0, Q[i]) / q_out[i]
    levy_rate = np.array([c.total_jump_rate for c in model.levy])
    levy_cdf = []
    for c in model.levy:
        r = np.array([rt for rt, _ in c.jumps], dtype=float)
        levy_cdf.append(np.cumsum(r) / r.sum() if r.size else r)
    s2 = model.sigma2
    return _Params(n, model.drifts, s2, np.sqrt(s2), q_out, levy_rate, q_out + levy_rate,
                   np.cumsum(P, axis=1), levy_cdf, model)


def _params(model: ValidatedModel) -> _Params:
    return _params_cached(model)


def _sample_jumps(p: _Params, rng, j_from: np.ndarray, u_kind: np.ndarray):
    """Draw the event at a segment end: new state and jump size for each path."""
    k = j_from.size
    chain = u_kind * p.rate[j_from] < p.q_out[j_from]
    j_new = j_from.copy()
    U = np.zeros(k)
    u_dest = rng.random(k)
    for i in range(p.n):
        sel = np.flatnonzero(chain & (j_from == i))
        if sel.size:
            j_new[sel] = np.minimum(np.searchsorted(p.trans_cdf[i], u_dest[sel], side="right"), p.n - 1)
            for dst in range(p.n):
                s2 = sel[j_new[sel] == dst]
                if s2.size:
                    law = p.model.transition_law(i, dst)
                    if not law.is_zero:
                        U[s2] = law.sample(rng, s2.size)
        sel = np.flatnonzero(~chain & (j_from == i))
        if sel.size:
            comps = np.minimum(np.searchsorted(p.levy_cdf[i], u_dest[sel], side="right"),
                               len(p.levy_cdf[i]) - 1)
            for c, (_, law) in enumerate(p.model.levy[i].jumps):
                s2 = sel[comps == c]
                if s2.size:
                    U[s2] = law.sample(rng, s2.size)
    return j_new, U


def _bridge_location(rng, A, B, d):
    """Time of the bridge extremum given A = m^2/(2 s2 d), B = c^2/(2 s2 d)."""
    k = A.size
    sa, sb = np.sqrt(A), np.sqrt(B)
    tiny = 1e-300
    p1 = sb / np.maximum(sa + sb, tiny)  # weight of the IG component is (1/sqrt A) / (1/sqrt A + 1/sqrt B)
    pick = rng.random(k)
    w1 = rng.wald(np.sqrt(np.maximum(A, tiny) / np.maximum(B, tiny)), np.maximum(2 * A, tiny))
    w2 = rng.wald(np.sqrt(np.maximum(B, tiny) / np.maximum(A, tiny)), np.maximum(2 * B, tiny))
    u = np.where(pick < p1, w1, 1.0 / np.maximum(w2, tiny))
    theta = d * u / (1.0 + u)
    theta = np.where(A <= 0, 0.0, np.where(B <= 0, d, theta))
    return np.clip(theta, 0.0, d)


def _bridge_passage(rng, a, b, s2, d):
    """Crossing indicator and time of level (x0 + a) by a bridge from x0 to x0 + a - b."""
    k = a.size
    p = np.where(b <= 0, 1.0, np.exp(-2.0 * a * np.maximum(b, 0.0) / (s2 * d)))
    crossed = rng.random(k) < p
    lam = a * a / (s2 * d)
    ab = np.abs(b)
    z = rng.standard_normal(k)
    w = rng.wald(np.where(ab > 0, a / np.maximum(ab, 1e-300), 1.0), np.maximum(lam, 1e-300))
    u = np.where(ab > 1e-14 * np.maximum(a, 1.0), w, lam / np.maximum(z * z, 1e-300))
    return crossed, d * u / (1.0 + u)


# ---------------------------------------------------------------------------
# block engine

def _run_block(p: _Params, rng, j0, T_end, levels=None, stop_when_crossed=False):
    m = j0.size
    t = np.zeros(m)
    x = np.zeros(m)
    j = j0.copy()
    S = np.zeros(m)
    I = np.zeros(m)
    Gb = np.zeros(m)
    G = np.zeros(m)
    jGb = j0.copy()
    jG = j0.copy()
    if levels is not None:
        L = np.asarray(levels, dtype=float)
        nL = L.size
        tau = np.full((m, nL), np.inf)
        jtau = np.full((m, nL), -1, dtype=np.int64)
        nxt = np.zeros(m, dtype=np.int64)
    active = np.arange(m)
    while active.size:
        k = active.size
        ja, ta, xa = j[active], t[active], x[active]
        rate = p.rate[ja]
        hold = rng.exponential(1.0, k) / np.where(rate > 0, rate, 1.0)
        hold = np.where(rate > 0, hold, np.inf)
        t1 = np.minimum(ta + hold, T_end[active])
        ended = ta + hold >= T_end[active]
        d = t1 - ta
        s2, sig = p.s2[ja], p.sig[ja]
        x1 = xa + p.a[ja] * d + sig * np.sqrt(d) * rng.standard_normal(k)
        diff = (s2 > 0) & (d > 0)
        s2safe = np.where(diff, s2, 1.0)
        dsafe = np.where(d > 0, d, 1.0)

        # segment maximum and its location
        E = rng.exponential(1.0, k)
        disc = np.sqrt((x1 - xa) ** 2 + 2.0 * s2 * d * E)
        M = np.where(diff, 0.5 * (xa + x1 + disc), np.maximum(xa, x1))
        thM = _bridge_location(rng, (M - xa) ** 2 / (2 * s2safe * dsafe),
                               (M - x1) ** 2 / (2 * s2safe * dsafe), d)
        thM = np.where(diff, thM, np.where(x1 >= xa, d, 0.0))
        upd = M >= S[active]
        ia = active[upd]
        S[ia], Gb[ia], jGb[ia] = M[upd], ta[upd] + thM[upd], ja[upd]

        # segment minimum and its location (drawn independently of the maximum)
        E = rng.exponential(1.0, k)
        disc = np.sqrt((x1 - xa) ** 2 + 2.0 * s2 * d * E)
        mn = np.where(diff, 0.5 * (xa + x1 - disc), np.minimum(xa, x1))
        thm = _bridge_location(rng, (xa - mn) ** 2 / (2 * s2safe * dsafe),
                               (x1 - mn) ** 2 / (2 * s2safe * dsafe), d)
        thm = np.where(diff, thm, np.where(x1 <= xa, d, 0.0))
        upd = mn <= I[active]
        ia = active[upd]
        I[ia], G[ia], jG[ia] = mn[upd], ta[upd] + thm[upd], ja[upd]

        # level crossings inside the segment
        if levels is not None:
            anc_t, anc_x = ta.copy(), xa.copy()
            cand = np.flatnonzero((nxt[active] < nL) & (d > 0))
            while cand.size:
                lv = L[nxt[active[cand]]]
                a_ = lv - anc_x[cand]
                b_ = lv - x1[cand]
                rem = t1[cand] - anc_t[cand]
                dc = diff[cand]
                cr_d, s_d = _bridge_passage(rng, np.maximum(a_, 0.0), b_, s2safe[cand],
                                            np.where(rem > 0, rem, 1.0))
                slope = p.a[ja[cand]]
                lin_cross = (slope > 0) & (x1[cand] >= lv)
                s_l = np.where(slope > 0, a_ / np.where(slope > 0, slope, 1.0), 0.0)
                crossed = np.where(dc, cr_d & (rem > 0), lin_cross)
                crossed |= a_ <= 0
                s = np.where(dc, s_d, s_l)
                s = np.where(a_ <= 0, 0.0, s)
                hit = cand[crossed]
                rows = active[hit]
                tau[rows, nxt[rows]] = anc_t[hit] + s[crossed]
                jtau[rows, nxt[rows]] = ja[hit]
                anc_t[hit] = anc_t[hit] + s[crossed]
                anc_x[hit] = lv[crossed]
                nxt[rows] += 1
                cand = hit[nxt[rows] < nL]

        t[active] = t1
        x[active] = x1

        # events at the end of non-terminal segments
        go = ~ended
        gi = np.flatnonzero(go)
        if gi.size:
            rows = active[gi]
            j_new, U = _sample_jumps(p, rng, ja[gi], rng.random(gi.size))
            xj = x1[gi] + U
            x[rows] = xj
            j[rows] = j_new
            up = xj >= S[rows]
            S[rows[up]], Gb[rows[up]], jGb[rows[up]] = xj[up], t1[gi][up], j_new[up]
            dn = xj <= I[rows]
            I[rows[dn]], G[rows[dn]], jG[rows[dn]] = xj[dn], t1[gi][dn], j_new[dn]
            if levels is not None:
                # upward jumps may cross several levels at once
                while True:
                    cand = np.flatnonzero(nxt[rows] < nL)
                    if not cand.size:
                        break
                    r = rows[cand]
                    hit = xj[cand] >= L[nxt[r]]
                    if not hit.any():
                        break
                    r = r[hit]
                    tau[r, nxt[r]] = t1[gi][cand[hit]]
                    jtau[r, nxt[r]] = j_new[cand[hit]]
                    nxt[r] += 1

        done = ended
        if levels is not None and stop_when_crossed:
            done = done | (nxt[active] >= nL)
        active = active[~done]

    out = dict(T=T_end, X=x, S=S, I=I, G_bar=Gb, G=G, j_eq=j, j_Gbar=jGb, j_G=jG)
    if levels is not None:
        out.update(tau=tau, j_tau=jtau)
    return out


def _start_states(model, n, start):
    """Start-state layout: 'each' gives n paths per state, an int fixes one state,
    'pi' draws from the stationary law (resolved per block)."""
    N = model.n_states
    if isinstance(start, str):
        if start == "each":
            return np.repeat(np.arange(N), n)
        if start == "pi":
            return None
        raise ValueError(f"unknown start {start!r}")
    s = int(start)
    if not 0 <= s < N:
        raise DomainViolation(f"start state {s} out of range")
    return np.full(n, s, dtype=np.int64)


def _simulate(model, n, seed, q, horizon, start, threads, levels=None, stop_when_crossed=False):
    if n < 1:
        raise DomainViolation("n must be >= 1")
    if (q is None) == (horizon is None) and levels is None:
        raise DomainViolation("give exactly one of q or horizon")
    if q is not None and not q > 0:
        raise DomainViolation(f"q must be > 0, got {q}")
    if horizon is not None and not horizon > 0:
        raise DomainViolation(f"horizon must be > 0, got {horizon}")
    p = _params(model)
    starts = _start_states(model, n, start)
    total = n if starts is None else starts.size
    blocks = [(b, b * BLOCK_SIZE, min(total, (b + 1) * BLOCK_SIZE)) for b in range((total + BLOCK_SIZE - 1) // BLOCK_SIZE)]

    def work(blk):
        b, lo, hi = blk
        rng = block_rng(seed, b)
        m = hi - lo
        if starts is None:
            j0 = rng.choice(model.n_states, size=m, p=model.pi)
        else:
            j0 = starts[lo:hi].copy()
        T = np.full(m, np.inf)
        if q is not None:
            T = rng.exponential(1.0 / q, m)
        if horizon is not None:
            T = np.minimum(T, horizon)
        res = _run_block(p, rng, j0, T, levels, stop_when_crossed)
        res["j0"] = j0
        return res

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    return {k: np.concatenate([r[k] for r in parts]) for k in parts[0]}


# ---------------------------------------------------------------------------
# public API

@dataclass(frozen=True)
class KilledStats:
    """Per-replication functionals at the killing (or horizon) time."""

    e_q: np.ndarray
    X: np.ndarray
    S: np.ndarray
    I: np.ndarray
    G_bar: np.ndarray
    G: np.ndarray
    j0: np.ndarray
    j_eq: np.ndarray
    j_Gbar: np.ndarray
    j_G: np.ndarray
    n_states: int
    q: float | None = None
    horizon: float | None = None
    seed: int | None = None

    def __len__(self) -> int:
        return self.X.size

    def take(self, idx) -> "KilledStats":
        f = {k: getattr(self, k)[idx] for k in
             ("e_q", "X", "S", "I", "G_bar", "G", "j0", "j_eq", "j_Gbar", "j_G")}
        return KilledStats(**f, n_states=self.n_states, q=self.q, horizon=self.horizon, seed=self.seed)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rep", "start_state", "e_q", "X", "S", "I", "G_bar", "G", "j_eq", "j_Gbar", "j_G"])
            for r in range(len(self)):
                w.writerow([r, int(self.j0[r]), repr(float(self.e_q[r])), repr(float(self.X[r])),
                            repr(float(self.S[r])), repr(float(self.I[r])), repr(float(self.G_bar[r])),
                            repr(float(self.G[r])), int(self.j_eq[r]), int(self.j_Gbar[r]), int(self.j_G[r])])


def killed_stats(model: ValidatedModel, q: float | None = None, n: int = 10_000, seed: int = 0, *,
                 horizon: float | None = None, start="each", threads: int = 1) -> KilledStats:
    """Simulate S, I, Gbar, G and the states at e_q (or at a fixed horizon).

    With ``start='each'`` there are ``n`` replications per start state.
    """
    r = _simulate(model, n, seed, q, horizon, start, threads)
    return KilledStats(r["T"], r["X"], r["S"], r["I"], r["G_bar"], r["G"], r["j0"],
                       r["j_eq"], r["j_Gbar"], r["j_G"], model.n_states, q, horizon, seed)


@dataclass(frozen=True)
class FirstPassageSamples:
    """tau[r, k] is the passage time above levels[k] (inf if never observed)."""

    levels: np.ndarray
    tau: np.ndarray
    j_tau: np.ndarray
    killed: np.ndarray
    j0: np.ndarray
    n_states: int
    q: float | None = None
    horizon: float | None = None

    @property
    def horizon_exhausted(self) -> np.ndarray:
        """Per level, the number of paths stopped before crossing."""
        return self.killed.sum(axis=0)


def first_passage(model: ValidatedModel, x, n: int, seed: int = 0, q: float | None = None, *,
                  horizon: float | None = None, start="each", threads: int = 1) -> FirstPassageSamples:
    """Sample tau_x^+ and J(tau_x^+) for one or several levels x > 0.

    With ``q`` the path is killed at an independent Exp(q) time; with
    ``horizon`` it is capped.  Paths stopped first are flagged ``killed``.
    """
    levels = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(levels <= 0):
        raise DomainViolation("levels must be > 0")
    order = np.argsort(levels)
    if q is None and horizon is None:
        raise DomainViolation("give q or horizon so that every path stops")
    r = _simulate(model, n, seed, q, horizon, start, threads, levels[order], stop_when_crossed=True)
    inv = np.argsort(order)
    tau, jt = r["tau"][:, inv], r["j_tau"][:, inv]
    return FirstPassageSamples(levels, tau, jt, ~np.isfinite(tau), r["j0"], model.n_states, q, horizon)


@dataclass(frozen=True)
class EstimateMatrix:
    value: np.ndarray
    stderr: np.ndarray
    n: np.ndarray  # replications per start state
    seed: int | None = None

    def within(self, target, n_se: float = 3.0) -> np.ndarray:
        return np.abs(self.value - target) <= n_se * self.stderr + 1e-12


def _matrix_mean(weights, j0, sel_state, n_states, seed=None) -> EstimateMatrix:
    N = n_states
    val = np.zeros((N, N), dtype=complex if np.iscomplexobj(weights) else float)
    se = np.zeros((N, N))
    counts = np.zeros(N, dtype=np.int64)
    for i in range(N):
        rows = np.flatnonzero(j0 == i)
        counts[i] = rows.size
        if rows.size == 0:
            raise EmptyCell(f"no replications start in state {i}")
        w = weights[rows]
        s = sel_state[rows]
        for j in range(N):
            y = np.where(s == j, w, 0.0)
            val[i, j] = y.mean()
            if rows.size > 1:
                se[i, j] = math.sqrt((np.var(y.real, ddof=1) + np.var(y.imag, ddof=1)) / rows.size) \
                    if np.iscomplexobj(y) else y.std(ddof=1) / math.sqrt(rows.size)
    return EstimateMatrix(val, se, counts, seed)


def functional_weights(stats: KilledStats, alpha=0.0, xi=0.0, functional="sup") -> np.ndarray:
    """Per-path weights: sup exp(-alpha S - xi Gbar), inf exp(alpha I - xi G),
    X exp(alpha X - xi e_q), one 1.  Complex alpha gives Fourier weights."""
    if functional == "sup":
        return np.exp(-alpha * stats.S - xi * stats.G_bar)
    if functional == "inf":
        return np.exp(alpha * stats.I - xi * stats.G)
    if functional == "X":
        return np.exp(alpha * stats.X - xi * stats.e_q)
    if functional == "one":
        return np.ones(len(stats))
    raise ValueError(f"unknown functional {functional!r}")


def estimate_transform(stats: KilledStats, alpha=0.0, xi=0.0, functional: str = "sup",
                       selector: str = "eq", weights=None) -> EstimateMatrix:
    """Entry (i, j): mean over paths started in i of weight * 1{J(selector) = j}."""
    if len(stats) == 0:
        raise EmptyCell("no samples")
    sel = {"eq": stats.j_eq, "Gbar": stats.j_Gbar, "G": stats.j_G}.get(selector)
    if sel is None:
        raise ValueError(f"selector must be 'eq', 'Gbar' or 'G', got {selector!r}")
    w = functional_weights(stats, alpha, xi, functional) if weights is None else np.asarray(weights)
    return _matrix_mean(w, stats.j0, sel, stats.n_states, stats.seed)


def first_passage_transform(fp: FirstPassageSamples, level_index: int = 0, xi: float = 0.0) -> EstimateMatrix:
    """E[exp(-xi tau); tau observed; J(tau)] for one simulated level."""
    tau = fp.tau[:, level_index]
    ok = np.isfinite(tau)
    w = np.where(ok, np.exp(-xi * np.where(ok, tau, 0.0)), 0.0)
    sel = np.where(ok, fp.j_tau[:, level_index], -1)
    return _matrix_mean(w, fp.j0, sel, fp.n_states)


def jackknife(fn, samples: list, groups: int = 50):
    """Delete-one-group jackknife for a matrix statistic of several independent sample sets.

    ``fn`` maps a list of KilledStats to a matrix; group g removes replication
    indices r with r % groups == g from every set.  Returns (value, stderr) with
    stderr = sqrt(|re var| + |im var|) entrywise.
    """
    full = fn(samples)
    loo = []
    for g in range(groups):
        subs = [s.take(np.flatnonzero(np.arange(len(s)) % groups != g)) for s in samples]
        loo.append(fn(subs))
    loo = np.array(loo)
    mean = loo.mean(axis=0)
    dev = loo - mean
    var = (groups - 1) / groups * (np.sum(dev.real ** 2, axis=0) + np.sum(dev.imag ** 2, axis=0))
    return full, np.sqrt(var)


# ---------------------------------------------------------------------------
# single-path skeleton

@dataclass(frozen=True)
class PathSkeleton:
    """Event times t_0 = 0 < t_1 < ... < t_K = end.

    ``states[k]`` holds on [t_k, t_{k+1}); ``x_left[k]`` = X(t_k-),
    ``x_right[k]`` = X(t_k).  Inside a segment X is a Brownian motion with
    drift pinned at these endpoints.
    """

    times: np.ndarray
    x_left: np.ndarray
    x_right: np.ndarray
    states: np.ndarray
    end: float
    killed: bool
    extras: dict = field(default_factory=dict)

    def value_at_end(self) -> float:
        return float(self.x_left[-1])

    def occupation(self, n_states: int) -> np.ndarray:
        occ = np.zeros(n_states)
        np.add.at(occ, self.states[:-1], np.diff(self.times))
        return occ


def sample_path(model: ValidatedModel, horizon: float | None = None, q: float | None = None,
                seed: int = 0, replication_index: int = 0, start: int | None = None) -> PathSkeleton:
    """Skeleton of one path, reproducible from (seed, replication_index)."""
    if (horizon is None) == (q is None):
        raise DomainViolation("give exactly one of horizon or q")
    p = _params(model)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(replication_index,))))
    j = int(rng.choice(model.n_states, p=model.pi)) if start is None else int(start)
    end = float(horizon) if horizon is not None else float(rng.exponential(1.0 / q))
    t, x = 0.0, 0.0
    times, xl, xr, states = [0.0], [0.0], [0.0], [j]
    while True:
        rate = p.rate[j]
        hold = rng.exponential(1.0) / rate if rate > 0 else math.inf
        t1 = min(t + hold, end)
        d = t1 - t
        x1 = x + p.a[j] * d + p.sig[j] * math.sqrt(d) * rng.standard_normal()
        if t + hold >= end:
            times.append(t1)
            xl.append(x1)
            xr.append(x1)
            states.append(j)
            break
        j_new, U = _sample_jumps(p, rng, np.array([j]), rng.random(1))
        times.append(t1)
        xl.append(x1)
        xr.append(x1 + float(U[0]))
        states.append(int(j_new[0]))
        t, x, j = t1, x1 + float(U[0]), int(j_new[0])
    return PathSkeleton(np.array(times), np.array(xl), np.array(xr), np.array(states, dtype=np.int64),
                        end, q is not None)
