"""First-passage (ladder) matrices and the closed-form Wiener-Hopf factors.

For a spectrally negative MAP and q > 0, det(F(z) - qI) has exactly N zeros
in Re z > 0.  If F(z_k) u_k = q u_k then exp(z_k X(t) - q t) u_{J(t)} is a
martingale, and optional stopping at the first passage above ``a`` gives

    E[exp(-q tau_a); J(tau_a)] u_k = exp(-z_k a) u_k,

so the ladder exponent Xi(q, 0) is the matrix with eigenpairs (z_k, u_k).
"""

from __future__ import annotations

import threading
import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .cumulant import cgm, cgm_derivative, perron, phi_inverse
from .errors import DefectiveRoots, DomainViolation, RootCountMismatch, SingularXi
from .model import ValidatedModel
from .transform import reverse

ROOT_SEP_TOL = 1e-6
NULL_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class ResolventMatrix:
    q: float
    I_q: np.ndarray


@dataclass(frozen=True)
class LadderFactors:
    q: float
    phi_q: float
    roots: list  # [(zeta_k, u_k)]
    Xi0: np.ndarray
    Lambda: np.ndarray
    h_phi: np.ndarray = field(repr=False)
    contour_count: int = -1

    @property
    def zetas(self) -> np.ndarray:
        return np.array([z for z, _ in self.roots])


def resolvent_I(model: ValidatedModel, q: float) -> ResolventMatrix:
    """I(q) = q (qI - Q)^-1, the law of J at an independent Exp(q) time."""
    if not q > 0:
        raise DomainViolation(f"q must be > 0, got {q}")
    n = model.n_states
    return ResolventMatrix(q, np.linalg.solve(q * np.eye(n) - model.Q, q * np.eye(n)))


# ---------------------------------------------------------------------------
# root search

def _det(model, z, q):
    n = model.n_states
    return np.linalg.det(cgm(model, complex(z)) - q * np.eye(n))


def _log_derivative(model, z, q):
    n = model.n_states
    M = cgm(model, complex(z)) - q * np.eye(n)
    D = cgm_derivative(model, complex(z))
    return np.trace(np.linalg.solve(M, D))


def _newton(model, z0, q, found, maxit=80):
    z = complex(z0)
    for _ in range(maxit):
        try:
            g = _log_derivative(model, z, q)
        except np.linalg.LinAlgError:
            return z  # landed exactly on a root
        except DomainViolation:
            return None
        g -= sum(1.0 / (z - r) for r in found)
        if g == 0 or not np.isfinite(g):
            return None
        step = 1.0 / g
        z = z - step
        if abs(step) <= 1e-14 * max(1.0, abs(z)):
            return z
        if abs(z) > 1e8:
            return None
    return None


def _polish(model, z, q):
    """Undeflated Newton steps to remove deflation round-off."""
    for _ in range(6):
        try:
            g = _log_derivative(model, z, q)
        except np.linalg.LinAlgError:
            return z
        if not np.isfinite(g) or g == 0:
            return z
        step = 1.0 / g
        z = z - step
        if abs(step) <= 1e-15 * max(1.0, abs(z)):
            break
    return z


def _phase_walk(model, q, path_pts):
    """Total change of arg det along a polyline, refining until each step < 0.4 rad."""
    total = 0.0
    for a, b in zip(path_pts[:-1], path_pts[1:]):
        stack = [(a, b, _det(model, a, q), _det(model, b, q), 0)]
        while stack:
            za, zb, da, db, depth = stack.pop()
            d = np.angle(db / da)
            if abs(d) > 0.4 and depth < 40:
                zm = 0.5 * (za + zb)
                dm = _det(model, zm, q)
                stack.append((zm, zb, dm, db, depth + 1))
                stack.append((za, zm, da, dm, depth + 1))
            else:
                total += d
    return total


def contour_count(model: ValidatedModel, q: float, R: float) -> int:
    """Zeros of det(F(z) - qI) inside [0, R] x [-R, R] by the argument principle."""
    n_edge = 64
    xs = np.linspace(0.0, R, n_edge)
    ys = np.linspace(-R, R, 2 * n_edge)
    pts = ([complex(x, -R) for x in xs]
           + [complex(R, y) for y in ys[1:]]
           + [complex(x, R) for x in xs[::-1][1:]]
           + [complex(0.0, y) for y in ys[::-1][1:]])
    return int(round(_phase_walk(model, q, pts) / (2 * np.pi)))


def _radius_guess(model, q, phi):
    r = phi
    for i, c in enumerate(model.levy):
        rate = q - model.Q[i, i] + c.total_jump_rate
        if c.sigma2 > 0:
            r = max(r, (abs(c.a) + np.sqrt(c.a ** 2 + 2 * c.sigma2 * rate)) / c.sigma2)
        elif c.a != 0:
            r = max(r, rate / abs(c.a))
    return 2.0 * r + 1.0


def wh_roots(model: ValidatedModel, q: float):
    """The N zeros of det(F(z) - qI) in Re z > 0 with unit null vectors.

    Returns ``(roots, certified_count)`` where ``roots`` is a list of
    ``(zeta, u)`` sorted by real part.
    """
    if not model.spectrally_negative:
        raise DomainViolation("wh_roots needs a spectrally negative model")
    if not q > 0:
        raise DomainViolation(f"q must be > 0, got {q}")
    n = model.n_states
    phi = phi_inverse(model, q)
    if n == 1:
        # psi(z) = q has exactly one zero in Re z > 0 for a spectrally negative process
        return [(phi, np.ones(1))], 1

    R = _radius_guess(model, q, phi)
    count = contour_count(model, q, R)
    for _ in range(12):
        c2 = contour_count(model, q, 2 * R)
        if c2 == count:
            break
        R, count = 2 * R, c2
    if count != n:
        raise RootCountMismatch(f"argument principle counts {count} zeros in Re z > 0, expected {n}")

    found: list[complex] = [complex(phi)]
    rng = np.random.default_rng(12345)
    seeds = [complex(x, y) for x in np.linspace(0.05 * R, R, 7)
             for y in np.linspace(-R, R, 9)]
    seeds += list(rng.uniform(0, R, 64) + 1j * rng.uniform(-R, R, 64))
    for s in seeds:
        if len(found) >= n:
            break
        z = _newton(model, s, q, found)
        if z is None or not (z.real > 1e-12 and abs(z.imag) <= 2 * R and z.real <= 2 * R):
            continue
        z = _polish(model, z, q)
        if abs(z.imag) <= 1e-10 * max(1.0, abs(z)):
            z = complex(z.real, 0.0)
        if min(abs(z - r) for r in found) < 1e-9 * max(1.0, abs(z)):
            continue
        found.append(z)
        if z.imag != 0.0 and len(found) < n:
            zc = _polish(model, z.conjugate(), q)
            found.append(complex(z.real, -abs(z.imag)) if zc.imag == 0 else zc)
    found.sort(key=lambda z: (z.real, z.imag))
    for a in range(len(found)):
        for b in range(a + 1, len(found)):
            if abs(found[a] - found[b]) < ROOT_SEP_TOL:
                raise DefectiveRoots(f"zeros {found[a]} and {found[b]} coalesce at q={q}")

    # a repeated zero is usable when it is semisimple: its null space then
    # supplies as many independent vectors as the multiplicity
    roots = []
    for z in found:
        M = cgm(model, z if z.imag else z.real) - q * np.eye(n)
        _, s, vh = np.linalg.svd(M)
        dim = int(np.sum(s < 1e-8 * max(1.0, s[0])))
        if dim == 0:
            dim = 1
        if dim > 1 and len(found) == n:
            raise DefectiveRoots(f"null space at zeta={z} is more than one-dimensional")
        for k in range(1, dim + 1):
            u = vh[-k].conj()
            u = u * np.exp(-1j * np.angle(u[np.argmax(np.abs(u))]))
            if z.imag == 0.0:
                u = u.real
            u = u / np.linalg.norm(u)
            if np.linalg.norm(M @ u) > NULL_RESIDUAL_TOL:
                raise DefectiveRoots(f"null-vector residual {np.linalg.norm(M @ u):.2e} at zeta={z}")
            roots.append((z if z.imag else z.real, u))
    if len(roots) != n:
        raise RootCountMismatch(f"Newton search found {len(roots)} of {n} zeros counting multiplicity (q={q})")
    return roots, count


# ---------------------------------------------------------------------------
# ladder factors with a per-(model, q) cache

_cache: "weakref.WeakKeyDictionary[ValidatedModel, dict]" = weakref.WeakKeyDictionary()
_cache_lock = threading.Lock()


def _build_factors(model: ValidatedModel, q: float) -> LadderFactors:
    roots, count = wh_roots(model, q)
    U = np.column_stack([u for _, u in roots]).astype(complex)
    Z = np.diag([complex(z) for z, _ in roots])
    Xi = U @ Z @ np.linalg.inv(U)
    if np.max(np.abs(Xi.imag)) > 1e-8 * max(1.0, np.max(np.abs(Xi))):
        raise DefectiveRoots(f"ladder matrix has imaginary part {np.max(np.abs(Xi.imag)):.2e}")
    Xi = Xi.real
    phi = phi_inverse(model, q)
    h = perron(model, phi).h
    Lam = phi * np.eye(model.n_states) - (Xi * h[None, :]) / h[:, None]
    return LadderFactors(float(q), phi, roots, Xi, Lam, h, count)


def ladder_factors(model: ValidatedModel, q: float) -> LadderFactors:
    """Cached LadderFactors; each (model, q) is built once even under concurrency."""
    q = float(q)
    with _cache_lock:
        per_model = _cache.setdefault(model, {})
        slot = per_model.get(q)
        if slot is None:
            slot = per_model[q] = [threading.Lock(), None]
    lock = slot[0]
    with lock:
        if slot[1] is None:
            slot[1] = _build_factors(model, q)
    return slot[1]


def xi_matrix(model: ValidatedModel, q: float, alpha: float = 0.0) -> np.ndarray:
    """Ladder cumulant Xi(q, alpha) = Xi(q, 0) + alpha I."""
    return ladder_factors(model, q).Xi0 + alpha * np.eye(model.n_states)


def xi_from_lambda(model: ValidatedModel, q: float, alpha: float = 0.0) -> np.ndarray:
    """diag(h) ((Phi + alpha) I - Lambda) diag(h)^-1 with h = h(Phi(q))."""
    lf = ladder_factors(model, q)
    h = lf.h_phi
    A = (lf.phi_q + alpha) * np.eye(model.n_states) - lf.Lambda
    return (A * h[:, None]) / h[None, :]


def lambda_matrix(model: ValidatedModel, q: float) -> np.ndarray:
    """Generator of J at first-passage times under the Phi(q)-tilted measure."""
    return ladder_factors(model, q).Lambda


def lambda_residual(model: ValidatedModel, q: float) -> float:
    """max_k |F_Phi(mu_k) r_k| over eigenpairs (mu_k, r_k) of -Lambda(q)."""
    lf = ladder_factors(model, q)
    h = lf.h_phi
    kap = perron(model, lf.phi_q).kappa
    mu, R = np.linalg.eig(-lf.Lambda)
    worst = 0.0
    for k in range(len(mu)):
        Fg = (cgm(model, complex(mu[k] + lf.phi_q)) * h[None, :]) / h[:, None] - kap * np.eye(len(h))
        r = R[:, k] / np.linalg.norm(R[:, k])
        worst = max(worst, float(np.linalg.norm(Fg @ r)))
    return worst


def up_crossing(model: ValidatedModel, q: float, xi: float, x: float) -> np.ndarray:
    """E[exp(-xi tau_x); tau_x < e_q; J(tau_x)] = exp(-Xi(q + xi, 0) x)."""
    if x < 0 or xi < 0:
        raise DomainViolation("need x >= 0 and xi >= 0")
    return expm(-xi_matrix(model, q + xi) * x)


def _diag_rowsum(M):
    return np.diag(M.sum(axis=1))


def sup_factor(model: ValidatedModel, q: float, alpha: float = 0.0, xi: float = 0.0,
               conditioning: str = "at_eq") -> np.ndarray:
    """E[exp(-alpha S(e_q) - xi Gbar(e_q)); J(.)] with J read at e_q or at Gbar."""
    if alpha < 0 or xi < 0:
        raise DomainViolation("need alpha >= 0 and xi >= 0")
    Xa = xi_matrix(model, q + xi, alpha)
    X0 = xi_matrix(model, q)
    Iq = resolvent_I(model, q).I_q
    if conditioning == "at_eq":
        rhs = X0 @ Iq
    elif conditioning == "at_G":
        rhs = _diag_rowsum(X0 @ Iq)
    else:
        raise ValueError(f"conditioning must be 'at_eq' or 'at_G', got {conditioning!r}")
    try:
        return np.linalg.solve(Xa, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularXi(str(exc)) from exc


def _reversed_model(model: ValidatedModel) -> ValidatedModel:
    rv = _reverse_cache.get(model)
    if rv is None:
        rv = reverse(model).model
        _reverse_cache[model] = rv
    return rv


_reverse_cache: "weakref.WeakKeyDictionary[ValidatedModel, ValidatedModel]" = weakref.WeakKeyDictionary()


def gbar_state_law(model: ValidatedModel, q: float) -> np.ndarray:
    """P(J(Gbar(e_q)) = k) under the stationary start, pi Xi^-1 diag(Xi e)."""
    X0 = xi_matrix(model, q)
    return model.pi @ np.linalg.solve(X0, _diag_rowsum(X0))


def _inf_factor_formula(model, q, alpha, xi, conditioning):
    n = model.n_states
    pi = model.pi
    rev = _reversed_model(model)
    Xh = xi_matrix(rev, q + xi, -alpha)
    Xh0 = xi_matrix(rev, q)
    left = q * np.linalg.solve((q + xi) * np.eye(n) - cgm(model, float(alpha)), np.eye(n))
    mid = Xh.T / pi[:, None]
    if conditioning == "at_eq":
        right = np.linalg.solve(Xh0.T, np.diag(pi))  # Xih0^-T diag(pi)
    elif conditioning == "at_G":
        right = np.diag(np.linalg.solve(Xh0.T, pi))  # diag(pi Xih0^-1)
    elif conditioning == "at_G_literal":
        right = np.diag(pi / Xh0.sum(axis=1))  # diag(Xih0 e)^-1 diag(pi)
    else:
        raise ValueError(f"conditioning must be 'at_eq' or 'at_G', got {conditioning!r}")
    return left @ mid @ right


def inf_factor(model: ValidatedModel, q: float, alpha: float = 0.0, xi: float = 0.0,
               conditioning: str = "at_eq") -> np.ndarray:
    """E[exp(alpha I(e_q) - xi G(e_q)); J(.)] with J read at e_q or at G.

    Built from the ladder matrix of the reversed model, D = diag(pi):
    at_eq: q((q+xi)I - F(alpha))^-1 D^-1 Xih(q+xi,-alpha)^T Xih(q,0)^-T D,
    at_G:  q((q+xi)I - F(alpha))^-1 D^-1 Xih(q+xi,-alpha)^T diag(pi Xih(q,0)^-1).

    ``at_G_literal`` replaces the last factor by diag(Xih(q,0) e)^-1 D.  That
    form presumes that J at the last infimum time is pi-distributed under the
    stationary start, which fails in general (simulation rejects it on
    MODEL-B); it is kept only as a diagnostic.
    """
    if alpha < 0 or xi < 0:
        raise DomainViolation("need alpha >= 0 and xi >= 0")
    phi = phi_inverse(model, q + xi)
    if alpha >= phi:
        raise DomainViolation(f"alpha={alpha:g} must be below Phi(q+xi)={phi:g}")
    return _inf_factor_formula(model, q, alpha, xi, conditioning)


def key_identity_residual(model: ValidatedModel, q: float, alpha: float) -> float:
    """Max-abs gap in E(e^{alpha I(e_q)}; J(e_q))^T (F(alpha) - qI)^T
    = q D_v [alpha (Phi I - Lambda_hat)^-1 - I] D_v^-1, v = v(Phi(q))."""
    n = model.n_states
    # the closed form is rational in alpha, so it is used past Phi(q) as well
    E = _inf_factor_formula(model, q, alpha, 0.0, "at_eq")
    lhs = E.T @ (cgm(model, float(alpha)) - q * np.eye(n)).T
    phi = phi_inverse(model, q)
    v = perron(model, phi).v
    Lh = lambda_matrix(_reversed_model(model), q)
    inner = alpha * np.linalg.inv(phi * np.eye(n) - Lh) - np.eye(n)
    rhs = q * (inner * v[:, None]) / v[None, :]
    return float(np.max(np.abs(lhs - rhs)))
