"""Verification suites: each returns a list of Check lines with residual and threshold."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import ks_2samp

from . import cumulant as cu
from . import identity as idt
from . import ladder as la
from . import simulate as sim
from .errors import MapfluctError
from .model import ValidatedModel
from .transform import reverse, tilt


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        s = f"[{tag}] {self.name}: {self.value:.3e} (threshold {self.threshold:.1e})"
        return s + (f"  {self.detail}" if self.detail else "")


def _le(name, value, thr, detail=""):
    value = float(value)
    return Check(name, value, float(thr), bool(value <= thr), detail)


def max_z(est: np.ndarray, se: np.ndarray, target: np.ndarray) -> float:
    """Largest |est - target| / se over entries; zero-variance entries must match exactly."""
    d = np.abs(np.asarray(est) - np.asarray(target))
    se = np.asarray(se)
    z = np.where(se > 0, d / np.where(se > 0, se, 1.0), np.where(d <= 1e-12, 0.0, np.inf))
    return float(np.max(z))


# ---------------------------------------------------------------------------
# analytic structure

def random_diagonalizable(rng, n=3, lo=0.0, hi=2.0, max_cond=100.0):
    while True:
        S = rng.normal(size=(n, n))
        if np.linalg.cond(S) < max_cond:
            lam = rng.uniform(lo, hi, n)
            return S @ np.diag(lam) @ np.linalg.inv(S)


def structure_suite(model: ValidatedModel, q_list=(0.5, 1.0, 2.0), n_frullani: int = 100,
                    seed: int = 0) -> list[Check]:
    out = []
    n = model.n_states
    t0 = cu.perron(model, 0.0)
    out.append(_le("kappa(0) = 0", abs(t0.kappa), 1e-12))
    out.append(_le("h(0) = e", np.max(np.abs(t0.h - 1.0)), 1e-10))
    lo, hi = model.domain()
    grid = [a for a in np.linspace(-1.5, 1.5, 13) if lo < a < hi]
    norm_err = 0.0
    for a in grid:
        t = cu.perron(model, a)
        norm_err = max(norm_err, abs(t.v @ t.h - 1.0), abs(model.pi @ t.h - 1.0))
    out.append(_le("normalisations v.h = 1, pi.h = 1", norm_err, 1e-10))
    ks = np.array([cu.kappa(model, a) for a in grid])
    second = ks[:-2] - 2 * ks[1:-1] + ks[2:]
    out.append(_le("kappa convex on grid (max negative 2nd difference)", max(0.0, -second.min()), 1e-10))

    gam = [g for g in (-0.3, 0.4) if lo < g < hi]
    terr = 0.0
    for g in gam:
        tv = tilt(model, g)
        for a in (-0.2, 0.3, 0.7):
            if lo < a + g < hi:
                terr = max(terr, abs(tv.kappa(a) - tv.kappa_formula(a)))
    out.append(_le("tilt: kappa_gamma(a) = kappa(a+gamma) - kappa(gamma)", terr, 1e-9))

    rv = reverse(model)
    D = np.diag(model.pi)
    Di = np.diag(1.0 / model.pi)
    ferr = kerr = herr = 0.0
    for a in (-0.3, 0.0, 0.5, 1.0):
        if not lo < a < hi:
            continue
        F = cu.cgm(model, a)
        ferr = max(ferr, np.max(np.abs(cu.cgm(rv.model, a) - Di @ F.T @ D)))
        kerr = max(kerr, abs(cu.kappa(rv.model, a) - cu.kappa(model, a)))
        herr = max(herr, np.max(np.abs(model.pi * rv.h(a) - cu.perron(model, a).v)))
    out.append(_le("reversal: F_hat = D^-1 F^T D", ferr, 1e-8))
    out.append(_le("reversal: kappa_hat = kappa", kerr, 1e-8))
    out.append(_le("reversal: D h_hat = v", herr, 1e-8))

    if model.spectrally_negative:
        phierr = max(abs(cu.kappa(model, cu.phi_inverse(model, q)) - q) for q in q_list)
        out.append(_le("kappa(Phi(q)) = q", phierr, 1e-10))
        xerr = lerr = gen = ierr = serr = 0.0
        for q in q_list:
            X0 = la.xi_matrix(model, q)
            for a in (0.3, 1.1):
                xerr = max(xerr, np.max(np.abs(la.xi_matrix(model, q, a) - X0 - a * np.eye(n))),
                           np.max(np.abs(la.xi_from_lambda(model, q, a) - la.xi_matrix(model, q, a))))
            Lam = la.lambda_matrix(model, q)
            off = Lam - np.diag(np.diag(Lam))
            gen = max(gen, np.max(np.abs(Lam.sum(axis=1))), max(0.0, -off.min()))
            lerr = max(lerr, la.lambda_residual(model, q))
            Iq = la.resolvent_I(model, q).I_q
            ierr = max(ierr, np.max(np.abs(Iq.sum(axis=1) - 1.0)), max(0.0, -Iq.min()))
            C = np.linalg.solve(np.diag(X0.sum(axis=1)), X0 @ Iq)
            for a, x in ((0.0, 0.0), (0.7, 0.3)):
                serr = max(serr, np.max(np.abs(la.sup_factor(model, q, a, x, "at_eq")
                                               - la.sup_factor(model, q, a, x, "at_G") @ C)))
        out.append(_le("Xi(q,a) = Xi(q,0) + aI and Xi from Lambda", xerr, 1e-9))
        out.append(_le("Lambda(q) is a generator", gen, 1e-8))
        out.append(_le("Lambda eigenpair residual |F_Phi(mu) r|", lerr, 1e-7))
        out.append(_le("I(q) stochastic", ierr, 1e-12))
        out.append(_le("sup at_eq = sup at_G . C", serr, 1e-9))
        try:
            kres = max(la.key_identity_residual(model, 1.0, a) for a in (0.2, 0.5, 0.8))
            out.append(_le("key identity residual (q=1)", kres, 1e-6))
        except MapfluctError as exc:
            out.append(Check("key identity residual (q=1)", math.inf, 1e-6, False, str(exc)))

    rng = np.random.default_rng(seed)
    fr = 0.0
    for _ in range(n_frullani):
        A = random_diagonalizable(rng)
        fr = max(fr, np.max(np.abs(idt.frullani_expm(A, 1.0) - np.linalg.solve(np.eye(3) + A, np.eye(3)))))
    out.append(_le(f"Frullani vs linear solve ({n_frullani} random 3x3)", fr, 1e-8))
    return out


SCALAR_MODELS = ((1.0, 0.0), (2.0, 0.5), (1.0, -0.3))


def scalar_reduction_checks(models=SCALAR_MODELS, q_list=(0.5, 2.0),
                            alpha_xi=((0.3, 0.0), (0.6, 0.7))) -> list[Check]:
    """N = 1 Brownian models (sigma^2, drift) against the classical scalar formulas."""
    from .model import LevyComponent, make_spec, validate
    grid = []
    worst_sup = worst_inf = 0.0
    for s2, a in models:
        m = validate(make_spec([[0.0]], [LevyComponent(a, s2)]))
        for q in q_list:
            for al, xi in alpha_xi:
                grid.append((q, al, xi))
                # closed-form right inverse of a*x + s2*x^2/2
                ph = (-a + math.sqrt(a * a + 2 * s2 * q)) / s2
                phx = (-a + math.sqrt(a * a + 2 * s2 * (q + xi))) / s2
                sup = ph / (phx + al)
                psi = a * al + 0.5 * s2 * al * al
                inf = q * (phx - al) / (ph * (q + xi - psi))
                worst_sup = max(worst_sup, abs(la.sup_factor(m, q, al, xi)[0, 0] - sup))
                worst_inf = max(worst_inf, abs(la.inf_factor(m, q, al, xi)[0, 0] - inf))
    return [_le(f"scalar sup factor ({len(grid)} triples)", worst_sup, 1e-9),
            _le(f"scalar inf factor ({len(grid)} triples)", worst_inf, 1e-9)]


# ---------------------------------------------------------------------------
# Monte Carlo suites

def wh_suite(model: ValidatedModel, paths: int = 100_000, seed: int = 7, threads: int = 1,
             q: float = 1.0, n_se: float = 3.0) -> list[Check]:
    out = []
    per = max(1, paths // model.n_states)
    fp = sim.first_passage(model, 0.5, per, seed, q=q, threads=threads)
    e = sim.first_passage_transform(fp, 0)
    out.append(_le("up-crossing E[e^{-q tau_0.5}; J] vs exp(-Xi x) (max z)",
                   max_z(e.value, e.stderr, la.up_crossing(model, q, 0.0, 0.5)), n_se))
    ks = sim.killed_stats(model, q, per, seed + 1, threads=threads)
    e = sim.estimate_transform(ks, 0.7, 0.3, "sup", "eq")
    out.append(_le("sup factor at_eq (0.7, 0.3) (max z)",
                   max_z(e.value, e.stderr, la.sup_factor(model, q, 0.7, 0.3, "at_eq")), n_se))
    for a, x in ((0.4, 0.2), (0.2, 0.0)):
        for cond, sel in (("at_eq", "eq"), ("at_G", "G")):
            e = sim.estimate_transform(ks, a, x, "inf", sel)
            out.append(_le(f"inf factor {cond} ({a}, {x}) (max z)",
                           max_z(e.value, e.stderr, la.inf_factor(model, q, a, x, cond)), n_se))
    kres = max(la.key_identity_residual(model, q, a) for a in (0.2, 0.5, 0.8))
    out.append(_le("key identity residual", kres, 1e-6))
    return out


INDEPENDENCE_GRID = ((0.5, 0.0), (0.5, 0.5), (1.0, 0.0), (1.0, 0.5), (2.0, 0.0), (2.0, 0.5))


def product_estimates(fwd: sim.KilledStats, rev: sim.KilledStats, pi, alpha, xi, middle="pi"):
    """Sup factor at Gbar times the transposed reversed inf factor at G.

    middle='pi' uses D^-1 as the middle factor; middle='gbar' uses
    diag(P_pi(J(Gbar)))^-1 estimated from the same forward paths.
    """
    A = sim.estimate_transform(fwd, -1j * alpha, xi, "sup", "Gbar").value
    B = sim.estimate_transform(rev, 1j * alpha, xi, "inf", "G").value
    if middle == "pi":
        mid = 1.0 / pi
    else:
        mid = 1.0 / (pi @ sim.estimate_transform(fwd, 0.0, 0.0, "one", "Gbar").value)
    return (A * mid[None, :]) @ B.T @ np.diag(pi)


def independence_suite(model: ValidatedModel, paths: int = 200_000, seed: int = 7, threads: int = 1,
                       q: float = 1.0, n_se: float = 3.0, grid=INDEPENDENCE_GRID,
                       groups: int = 50) -> list[Check]:
    """Factorisation of q((q+xi)I - F(i alpha))^-1 into simulated sup and reversed inf factors."""
    out = []
    per = max(1, paths // model.n_states)
    rv = reverse(model).model
    fwd = sim.killed_stats(model, q, per, seed, threads=threads)
    rev = sim.killed_stats(rv, q, per, seed + 1, threads=threads)
    pi = model.pi
    n = model.n_states
    for a, x in grid:
        target = q * np.linalg.inv((q + x) * np.eye(n) - cu.cgm(model, 1j * a))
        val, se = sim.jackknife(lambda s: product_estimates(s[0], s[1], pi, a, x, "pi"), [fwd, rev], groups)
        out.append(_le(f"product (alpha={a}, xi={x}) vs q((q+xi)I-F(i alpha))^-1 (max z)",
                       max_z(val, se, target), n_se))
    return out


def reversal_ks(model: ValidatedModel, n: int = 100_000, seed: int = 8, threads: int = 1,
                q: float = 1.0, level: float = 0.05) -> list[Check]:
    """(e_q - Gbar, X - S) under pi against (G, I) of the reversed model under pi."""
    rv = reverse(model).model
    f = sim.killed_stats(model, q, n, seed, start="pi", threads=threads)
    r = sim.killed_stats(rv, q, n, seed + 1, start="pi", threads=threads)
    out = []
    for name, a, b in (("e_q - Gbar vs G_hat", f.e_q - f.G_bar, r.G),
                       ("X - S vs I_hat", f.X - f.S, r.I)):
        res = ks_2samp(a, b)
        crit = 1.358 * math.sqrt(2.0 / n)  # asymptotic 5% critical value for m = n
        detail = f"p={res.pvalue:.3f}; 1.63/sqrt(n)={1.63 / math.sqrt(n):.2e}"
        out.append(_le(f"KS {name}", res.statistic, crit, detail))
    return out


def rogozin_suite(model: ValidatedModel, q: float = 1.0, points=((0.5, 0.25), (1.0, 0.0)),
                  cfg: idt.QuadratureConfig = idt.DEFAULT_CFG) -> list[Check]:
    out = []
    for a, t, s in cfg.gate_points:
        out.append(_le(f"commute residual (alpha={a}, t={t}, s={s})",
                       idt.commute_residual(model, a, t, s, cfg), cfg.commute_gate))
    for a, x in points:
        R = idt.rogozin_factor(model, q, a, x, "sup", cfg, check_gate=False)
        L = la.sup_factor(model, q, a, x, "at_eq")
        rel = float(np.max(np.abs(R - L)) / np.max(np.abs(L)))
        out.append(_le(f"Rogozin sup factor vs ladder (alpha={a}, xi={x}) rel. error", rel, 1e-3))
    return out


KENDALL_T_BINS = ((0.4, 0.6), (0.9, 1.1), (1.4, 1.6), (1.9, 2.1))
KENDALL_X = (0.25, 0.5, 0.75, 1.0)


def kendall_suite(model: ValidatedModel, paths: int = 1_000_000, seed: int = 7, threads: int = 1,
                  q_list=(0.5, 2.0), t_bins=KENDALL_T_BINS, x_levels=KENDALL_X,
                  tol: float = 0.05) -> list[Check]:
    out = []
    if len(q_list) == model.n_states:
        rep = idt.kendall_assumption_check(model, q_list)
        out.append(_le(f"Kendall hypothesis: cond[h(Phi(q_k))] for q={tuple(q_list)}", rep.condition, 1e8))
    per = max(1, paths // model.n_states)
    horizon = max(hi for _, hi in t_bins) + 1e-9
    fp = sim.first_passage(model, list(x_levels), per, seed, horizon=horizon, threads=threads)
    rep = idt.kendall_residual(model, fp, t_bins, x_levels)
    out.append(_le(f"Kendall residual, max over {len(rep.cells)} cells", rep.max_deviation, tol,
                   f"mean {rep.mean_deviation:.2e}; max |z| {rep.max_se_ratio:.2f}"))
    return out


def ballot_suite(model: ValidatedModel, paths: int = 1_000_000, seed: int = 7, threads: int = 1,
                 t: float = 1.0, x_grid=(0.5, 1.0, 1.5), width: float = 0.1, n_se: float = 3.0) -> list[Check]:
    per = max(1, paths // model.n_states)
    ks = sim.killed_stats(model, None, per, seed, horizon=t, threads=threads)
    rep = idt.ballot_residual(model, t, x_grid, ks, width, n_se)
    out = []
    for c in rep.cells:
        out.append(_le(f"ballot cell x={c.x} (max z)", max_z(c.lhs, c.se, c.rhs), n_se,
                       f"lhs={np.round(c.lhs.ravel(), 5).tolist()}"))
    return out


SUITES = ("structure", "wh", "independence", "rogozin", "kendall", "ballot")
