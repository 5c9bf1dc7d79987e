"""Quadrature-side identities: matrix Frullani, Fourier densities, Spitzer-Rogozin
factors, and the Kendall and ballot comparisons against simulated samples."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.linalg import expm

from .cumulant import cgm_batch, perron, phi_inverse
from .errors import (CommuteGateFailed, DefectiveMatrix, DomainViolation, EmptyCell,
                     InsufficientSamples, NoDensity, ShapeViolation, SingularShift)
from .ladder import resolvent_I
from .model import ValidatedModel


@dataclass(frozen=True)
class QuadratureConfig:
    """Knobs for the Fourier and time quadratures.

    theta_sigmas: frequency cutoff theta_max = theta_sigmas / (sigma_min sqrt t);
        the Gaussian envelope there is exp(-theta_sigmas^2 / 2).
    alias_tol: target aliasing error of the trapezoid density inversion.
    nodes: Gauss-Legendre nodes per panel.
    t_max_factor: time integrals run over [0, t_max_factor / q].
    t_first: end of the first time panel, integrated in sqrt(t).
    t_ratio: geometric growth of later time panels.
    commute_gate: largest commutator norm accepted by ``rogozin_factor``.
    """

    theta_sigmas: float = 8.0
    alias_tol: float = 1e-7
    nodes: int = 16
    t_max_factor: float = 40.0
    t_first: float = 1e-2
    t_ratio: float = 2.0
    commute_gate: float = 1e-3
    gate_points: tuple = ((1.0, 0.5, 1.0),)


DEFAULT_CFG = QuadratureConfig()


@dataclass(frozen=True)
class DensitySlice:
    t: float
    x_grid: np.ndarray
    values: np.ndarray  # shape (len(x_grid), N, N)


# ---------------------------------------------------------------------------
# Frullani

def _scalar_frullani(lam: complex, q: float) -> complex:
    """int_0^inf (exp(-lam x) - 1) exp(-q x) / x dx by adaptive quadrature."""
    def f(x, part):
        if x == 0.0:
            v = -lam
        else:
            v = np.expm1(-lam * x) / x if np.isreal(lam) else (np.exp(-lam * x) - 1.0) / x
        v = v * math.exp(-q * x)
        return v.real if part == 0 else v.imag

    out = 0j
    for part in (0, 1):
        if part == 1 and lam.imag == 0:
            break
        tot = 0.0
        for a, b in ((0.0, 1.0), (1.0, math.inf)):
            val, _ = quad(f, a, b, args=(part,), epsabs=1e-14, epsrel=1e-12, limit=200)
            tot += val
        out += tot if part == 0 else 1j * tot
    return out


def frullani_expm(A, q: float) -> np.ndarray:
    """exp{int_0^inf (exp(-A x) - I) x^-1 exp(-q x) dx} via A = S diag(lam) S^-1."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not q > 0:
        raise DomainViolation(f"q must be > 0, got {q}")
    lam, S = np.linalg.eig(A)
    scale = max(1.0, float(np.max(np.abs(lam))))
    # repeated eigenvalues are fine as long as the eigenvectors stay independent
    if np.linalg.cond(S) > 1e12:
        raise DefectiveMatrix("eigenvector matrix is numerically singular")
    if np.min(np.abs(q + lam)) < 1e-12 * scale:
        raise SingularShift("qI + A is singular")
    if np.any((q + lam).real <= 0):
        raise SingularShift("the Frullani integral needs Re(q + lambda) > 0")
    d = np.array([np.exp(_scalar_frullani(complex(l), q)) for l in lam])
    M = (S * d[None, :]) @ np.linalg.inv(S)
    return np.real_if_close(M, tol=1e6).real if np.all(np.isreal(A)) else M


# ---------------------------------------------------------------------------
# Fourier inversion

def _require_density(model: ValidatedModel) -> float:
    s2 = model.sigma2
    if np.any(s2 <= 0):
        raise NoDensity(f"state {int(np.argmin(s2))} has no Brownian part")
    return float(np.sqrt(s2.min()))


def _phi_batch(model: ValidatedModel, w: np.ndarray, t: float) -> np.ndarray:
    """E[exp(i w X(t)); J(t)] for an array of (possibly complex) w."""
    F = cgm_batch(model, 1j * np.asarray(w, dtype=complex))
    return expm(F * t)


def _support_halfwidth(model: ValidatedModel, t: float) -> float:
    """Half-width containing all but a negligible part of the law of X(t)."""
    w = float(np.max(np.abs(model.drifts))) * t + 12.0 * float(np.sqrt(model.sigma2.max() * t))
    rates = []
    for c in model.levy:
        for r, law in c.jumps:
            rates.append((r, law))
    for law in model.trans_jump:
        rates.append((float(-model.Q.diagonal().min()), law))
    for r, law in rates:
        if law.family == "degenerate":
            w += abs(law.value) * (r * t + 10.0 * math.sqrt(r * t + 1.0))
        elif law.rates:
            w += (r * t + 10.0 * math.sqrt(r * t + 1.0)) * 30.0 / min(law.rates)
    return w


def density_matrix(model: ValidatedModel, t: float, x_grid, cfg: QuadratureConfig = DEFAULT_CFG) -> DensitySlice:
    """p_t(x)_ij = P_i(X(t) in dx, J(t)=j)/dx by trapezoid Fourier inversion."""
    if not t > 0:
        raise DomainViolation(f"t must be > 0, got {t}")
    sig = _require_density(model)
    x = np.atleast_1d(np.asarray(x_grid, dtype=float))
    theta_max = cfg.theta_sigmas / (sig * math.sqrt(t))
    # trapezoid in theta periodises the density with period 2 pi / h
    period = 2.0 * (_support_halfwidth(model, t) + float(np.max(np.abs(x))))
    h = 2.0 * math.pi / period
    m = int(math.ceil(theta_max / h))
    theta = h * np.arange(m + 1)
    phi = _phi_batch(model, theta, t)  # (m+1, N, N)
    w = np.full(m + 1, h)
    w[0] = 0.5 * h
    kern = np.exp(-1j * np.outer(x, theta)) * w[None, :]
    vals = np.einsum("xk,kij->xij", kern, phi).real / math.pi
    return DensitySlice(float(t), x, vals)


def _gl_panels(edges, nodes):
    g, wg = np.polynomial.legendre.leggauss(nodes)
    a, b = np.asarray(edges[:-1]), np.asarray(edges[1:])
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    xs = (mid[:, None] + half[:, None] * g[None, :]).ravel()
    ws = (half[:, None] * wg[None, :]).ravel()
    return xs, ws


def half_line_transform(model: ValidatedModel, t: float, alpha, xi: float = 0.0,
                        side: str = "nonneg", cfg: QuadratureConfig = DEFAULT_CFG) -> np.ndarray:
    """exp(-xi t) E[exp(i alpha X(t)) 1{X(t) >= 0} ; J(t)] (or 1{X(t) < 0}).

    Uses 1{x > 0} = 1/2 + (1/pi) int_0^inf sin(u x)/u du, so the nonnegative part
    is phi(alpha)/2 - (i/2pi) int_0^inf [phi(alpha+u) - phi(alpha-u)]/u du with
    phi(w) = exp(F(iw) t).  Complex alpha is allowed: alpha = i beta gives
    E[exp(-beta X(t)); X(t) >= 0, J(t)].
    """
    if side not in ("nonneg", "neg"):
        raise ValueError(f"side must be 'nonneg' or 'neg', got {side!r}")
    if not t > 0:
        raise DomainViolation(f"t must be > 0, got {t}")
    sig = _require_density(model)
    alpha = complex(alpha)
    theta_max = cfg.theta_sigmas / (sig * math.sqrt(t)) + abs(alpha.real)
    # u-panels narrow enough to resolve oscillation over the bulk of X(t)
    L = float(np.max(np.abs(model.drifts))) * t + 6.0 * float(np.sqrt(model.sigma2.max() * t)) + 1e-300
    width = min(theta_max, 0.5 * math.pi / L)
    n_pan = max(1, int(math.ceil(theta_max / width)))
    u, wu = _gl_panels(np.linspace(0.0, theta_max, n_pan + 1), cfg.nodes)
    phi_p = _phi_batch(model, alpha + u, t)
    phi_m = _phi_batch(model, alpha - u, t)
    integral = np.einsum("k,kij->ij", wu / u, phi_p - phi_m)
    phi0 = _phi_batch(model, np.array([alpha]), t)[0]
    nonneg = 0.5 * phi0 - 0.5j / math.pi * integral
    out = nonneg if side == "nonneg" else phi0 - nonneg
    return math.exp(-xi * t) * out


def commute_residual(model: ValidatedModel, alpha: float, t: float, s: float,
                     cfg: QuadratureConfig = DEFAULT_CFG) -> float:
    """Spectral norm of [E(e^{i alpha X(t)}; X(t) >= 0), E(e^{i alpha X(s)}; X(s) < 0)]."""
    if model.n_states == 1:
        return 0.0
    A = half_line_transform(model, t, alpha, 0.0, "nonneg", cfg)
    B = half_line_transform(model, s, alpha, 0.0, "neg", cfg)
    return float(np.linalg.norm(A @ B - B @ A, 2))


def _time_nodes(q: float, cfg: QuadratureConfig):
    """Nodes/weights for int_0^T g(t) dt/t with T = t_max_factor/q.

    On [0, t_first] the substitution t = s^2 turns dt/t into 2 ds/s; the
    integrand there behaves like sqrt(t), so the transformed one is smooth.
    """
    T = cfg.t_max_factor / q
    t1 = min(cfg.t_first, T)
    s, ws = _gl_panels(np.array([0.0, math.sqrt(t1)]), cfg.nodes)
    ts, wts = [s ** 2], [2.0 * ws / s]
    edges = [t1]
    while edges[-1] < T:
        edges.append(min(T, edges[-1] * cfg.t_ratio))
    tt, wt = _gl_panels(np.array(edges), cfg.nodes)
    ts.append(tt)
    wts.append(wt / tt)
    return np.concatenate(ts), np.concatenate(wts)


def rogozin_exponent(model: ValidatedModel, q: float, alpha: float, xi: float, side: str,
                     cfg: QuadratureConfig = DEFAULT_CFG) -> np.ndarray:
    """int_0^inf dt t^-1 e^{-qt} int_{half-line} (e^{-xi t -/+ alpha x} - 1) P(X(t) in dx; J(t))."""
    if side == "sup":
        a_c, hl = 1j * alpha, "nonneg"
    elif side == "inf":
        a_c, hl = -1j * alpha, "neg"
    else:
        raise ValueError(f"side must be 'sup' or 'inf', got {side!r}")
    ts, wts = _time_nodes(q, cfg)
    n = model.n_states
    acc = np.zeros((n, n), dtype=complex)
    for t, w in zip(ts, wts):
        weighted = half_line_transform(model, t, a_c, xi, hl, cfg)
        mass = half_line_transform(model, t, 0.0, 0.0, hl, cfg)
        acc += w * math.exp(-q * t) * (weighted - mass)
    return acc


def rogozin_factor(model: ValidatedModel, q: float, alpha: float = 0.0, xi: float = 0.0,
                   side: str = "sup", cfg: QuadratureConfig = DEFAULT_CFG,
                   check_gate: bool = True) -> np.ndarray:
    """exp{rogozin_exponent} I(q); refuses to run when the commuting hypothesis fails."""
    if alpha < 0 or xi < 0:
        raise DomainViolation("need alpha >= 0 and xi >= 0")
    if check_gate:
        for a, t, s in cfg.gate_points:
            r = commute_residual(model, a, t, s, cfg)
            if r > cfg.commute_gate:
                raise CommuteGateFailed(r, cfg.commute_gate)
    E = rogozin_exponent(model, q, alpha, xi, side, cfg)
    M = expm(E) @ resolvent_I(model, q).I_q
    return np.real_if_close(M, tol=1e8).real if np.max(np.abs(M.imag)) < 1e-10 else M


# ---------------------------------------------------------------------------
# Kendall identity

@dataclass(frozen=True)
class KendallCell:
    t_lo: float
    t_hi: float
    x: float
    mc: np.ndarray
    mc_se: np.ndarray
    analytic: np.ndarray
    deviation: float  # ||mc - analytic||_F / ||analytic||_F
    hits: int
    vacuous: bool = False


@dataclass(frozen=True)
class KendallReport:
    cells: list
    max_deviation: float
    mean_deviation: float
    max_se_ratio: float = field(default=float("nan"))


@dataclass(frozen=True)
class AssumptionReport:
    q_list: tuple
    det: float
    condition: float
    independent: bool


def kendall_assumption_check(model: ValidatedModel, q_list) -> AssumptionReport:
    """Stack h(Phi(q_k)) as rows and judge their independence by condition number."""
    qs = tuple(float(q) for q in q_list)
    n = model.n_states
    if len(qs) != n:
        raise DomainViolation(f"need {n} values of q, got {len(qs)}")
    if len(set(qs)) != len(qs) or any(q <= 0 for q in qs):
        raise DomainViolation("q values must be distinct and positive")
    H = np.vstack([perron(model, phi_inverse(model, q)).h for q in qs])
    cond = float(np.linalg.cond(H))
    return AssumptionReport(qs, float(abs(np.linalg.det(H))), cond, cond < 1e8)


def kendall_residual(model: ValidatedModel, samples, t_bins, x_levels,
                     cfg: QuadratureConfig = DEFAULT_CFG, min_hits: int = 100) -> KendallReport:
    """Compare int_bin t P(tau_x in dt; J) with x int_bin p_t(x) dt per (t-bin, x) cell.

    ``samples`` is a FirstPassageSamples whose levels include every x.  The MC
    side averages tau 1{tau in bin, J(tau)=j} per start state; the analytic side
    integrates the Fourier density over the bin with Gauss-Legendre.
    """
    if not model.spectrally_negative:
        raise DomainViolation("the Kendall identity needs a spectrally negative model")
    n = model.n_states
    levels = list(np.asarray(samples.levels, dtype=float))
    cells = []
    for lo, hi in t_bins:
        g, wg = np.polynomial.legendre.leggauss(cfg.nodes)
        ts = 0.5 * (lo + hi) + 0.5 * (hi - lo) * g
        for x in x_levels:
            if x <= 0:
                z = np.zeros((n, n))
                cells.append(KendallCell(lo, hi, float(x), z, z, z, 0.0, 0, True))
                continue
            k = int(np.argmin(np.abs(np.asarray(levels) - x)))
            if abs(levels[k] - x) > 1e-12:
                raise DomainViolation(f"level {x} was not simulated")
            tau = samples.tau[:, k]
            jt = samples.j_tau[:, k]
            inbin = (tau >= lo) & (tau < hi)
            hits = int(inbin.sum())
            if hits < min_hits:
                raise InsufficientSamples(f"cell t=[{lo},{hi}) x={x} has {hits} hits")
            mc = np.zeros((n, n))
            se = np.zeros((n, n))
            for i in range(n):
                rows = samples.j0 == i
                ni = int(rows.sum())
                if ni == 0:
                    raise EmptyCell(f"no replications start in state {i}")
                for j in range(n):
                    y = np.where(inbin[rows] & (jt[rows] == j), tau[rows], 0.0)
                    mc[i, j] = y.mean()
                    se[i, j] = y.std(ddof=1) / math.sqrt(ni)
            an = np.zeros((n, n))
            for t, w in zip(ts, wg):
                an += 0.5 * (hi - lo) * w * density_matrix(model, t, [x], cfg).values[0]
            an *= x
            nrm = np.linalg.norm(an)
            vac = nrm < 1e-12
            dev = 0.0 if vac else float(np.linalg.norm(mc - an) / nrm)
            cells.append(KendallCell(lo, hi, float(x), mc, se, an, dev, hits, vac))
    devs = [c.deviation for c in cells if not c.vacuous]
    ratios = [float(np.max(np.abs(c.mc - c.analytic) / np.maximum(c.mc_se, 1e-300)))
              for c in cells if not c.vacuous]
    return KendallReport(cells, max(devs) if devs else 0.0, float(np.mean(devs)) if devs else 0.0,
                         max(ratios) if ratios else float("nan"))


# ---------------------------------------------------------------------------
# ballot theorem

@dataclass(frozen=True)
class BallotCell:
    x: float
    lhs: np.ndarray  # P(X(t) in bin, I(t) = 0; J(t)) / width
    rhs: np.ndarray  # (x / ct) P(X(t) in bin; J(t)) / width, weighted per path
    se: np.ndarray   # SE of lhs - rhs
    within: bool


@dataclass(frozen=True)
class BallotReport:
    t: float
    c: float
    width: float
    cells: list

    @property
    def passed(self) -> bool:
        return all(c.within for c in self.cells)


def ballot_drift(model: ValidatedModel) -> float:
    """Common drift c of a drift-minus-subordinator model, else ShapeViolation."""
    a = model.drifts
    if np.any(model.sigma2 != 0):
        raise ShapeViolation("the ballot identity needs sigma = 0 in every state")
    if not np.allclose(a, a[0], rtol=0, atol=1e-14) or a[0] <= 0:
        raise ShapeViolation("the ballot identity needs one common drift c > 0")
    for _, law in model.all_laws():
        if law.has_positive_mass:
            raise ShapeViolation("the ballot identity needs nonpositive jumps only")
    return float(a[0])


def ballot_residual(model: ValidatedModel, t: float, x_grid, samples, width: float = 0.1,
                    n_se: float = 3.0) -> BallotReport:
    """Per-cell check of P(X(t) in dx, I(t)=0; J(t)) = (x/(ct)) P(X(t) in dx; J(t)).

    Both sides come from the same fixed-horizon paths.  The right side weights
    each path by its own X(t)/(ct), which is the bin-integrated form of the
    identity, so no binning bias enters.  The per-path difference
    D = 1{bin, I=0, J=j} - X/(ct) 1{bin, J=j} has mean zero under the identity.
    """
    c = ballot_drift(model)
    n = model.n_states
    ct = c * t
    X, I, jt, j0 = samples.X, samples.I, samples.j_eq, samples.j0
    cells = []
    for x in x_grid:
        lo, hi = x - width / 2, x + width / 2
        if abs(x - ct) <= 1e-12 * max(1.0, ct):
            # the atom at ct carries the no-jump paths, where I(t) = 0 automatically
            lo, hi = ct - 1e-9 * max(1.0, ct), ct + 1e-9 * max(1.0, ct)
        inb = (X >= lo) & (X < hi)
        lhs = np.zeros((n, n))
        rhs = np.zeros((n, n))
        se = np.zeros((n, n))
        for i in range(n):
            rows = j0 == i
            ni = int(rows.sum())
            if ni == 0:
                raise EmptyCell(f"no replications start in state {i}")
            for j in range(n):
                a = (inb & (I == 0.0) & (jt == j))[rows].astype(float)
                b = np.where(inb & (jt == j), X / ct, 0.0)[rows]
                lhs[i, j] = a.mean()
                rhs[i, j] = b.mean()
                se[i, j] = (a - b).std(ddof=1) / math.sqrt(ni)
        ok = bool(np.all(np.abs(lhs - rhs) <= n_se * se + 1e-12))
        cells.append(BallotCell(float(x), lhs, rhs, se, ok))
    return BallotReport(float(t), c, float(width), cells)
