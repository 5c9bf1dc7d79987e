"""Matrix cumulant F(alpha), its Perron-Frobenius triple and the right inverse Phi."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainViolation, NoFiniteRoot, SpectralError
from .model import LevyComponent, ValidatedModel

FD_STEP = 1e-5


@dataclass(frozen=True)
class SpectralTriple:
    """Perron root ``kappa`` of F(alpha) with right/left vectors ``h``/``v``.

    Normalised so that ``pi @ h == 1`` and ``v @ h == 1``.
    """

    alpha: float
    kappa: float
    h: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class CumulantEval:
    alpha: complex
    value: np.ndarray


def psi_eval(levy: LevyComponent, alpha):
    """Laplace exponent of one Levy component; complex ``alpha`` gives the char. exponent."""
    for _, law in levy.jumps:
        if not law.in_domain(alpha):
            lo, hi = law.domain()
            raise DomainViolation(f"alpha={alpha} outside jump-law domain ({lo:g}, {hi:g})")
    return levy.psi(alpha)


def cgm(model: ValidatedModel, alpha) -> np.ndarray:
    """F(alpha) as a bare array; real input gives a real matrix."""
    model.check_domain(alpha)
    n = model.n_states
    dtype = complex if np.iscomplexobj(alpha) else float
    F = np.array(model.Q, dtype=dtype)
    for i in range(n):
        for j in range(n):
            if i != j and F[i, j] != 0:
                F[i, j] *= model.transition_law(i, j).transform(alpha)
        F[i, i] += model.levy[i].psi(alpha)
    return F


def cgm_eval(model: ValidatedModel, alpha) -> CumulantEval:
    return CumulantEval(alpha, cgm(model, alpha))


def cgm_derivative(model: ValidatedModel, alpha) -> np.ndarray:
    """Entrywise derivative dF/dalpha."""
    model.check_domain(alpha)
    n = model.n_states
    dtype = complex if np.iscomplexobj(alpha) else float
    D = np.zeros((n, n), dtype=dtype)
    for i in range(n):
        for j in range(n):
            if i != j and model.Q[i, j] != 0:
                D[i, j] = model.Q[i, j] * model.transition_law(i, j).transform_derivative(alpha)
        D[i, i] = model.levy[i].psi_derivative(alpha)
    return D


def cgm_batch(model: ValidatedModel, alphas: np.ndarray) -> np.ndarray:
    """F evaluated on an array of arguments, shape ``alphas.shape + (N, N)``."""
    alphas = np.asarray(alphas)
    n = model.n_states
    out = np.zeros(alphas.shape + (n, n), dtype=complex if np.iscomplexobj(alphas) else float)
    for i in range(n):
        for j in range(n):
            if i == j:
                out[..., i, i] = model.Q[i, i] + model.levy[i].psi(alphas)
            elif model.Q[i, j] != 0:
                out[..., i, j] = model.Q[i, j] * model.transition_law(i, j).transform(alphas)
    return out


def _perron_vectors(F: np.ndarray):
    w, V = np.linalg.eig(F)
    k = int(np.argmax(w.real))
    lam = w[k]
    wl, W = np.linalg.eig(F.T)
    kl = int(np.argmin(np.abs(wl - lam)))
    h = V[:, k]
    v = W[:, kl]
    return lam, h, v


def perron(model: ValidatedModel, alpha: float) -> SpectralTriple:
    """Perron-Frobenius triple of the real ML-matrix F(alpha)."""
    alpha = float(alpha)
    F = cgm(model, alpha)
    lam, h, v = _perron_vectors(F)
    if abs(lam.imag) > 1e-10 * max(1.0, abs(lam)):
        raise SpectralError(f"leading eigenvalue {lam} is not real")
    h = np.real_if_close(h * np.exp(-1j * np.angle(h[np.argmax(np.abs(h))])), tol=1e6).real
    v = np.real_if_close(v * np.exp(-1j * np.angle(v[np.argmax(np.abs(v))])), tol=1e6).real
    if h.sum() < 0:
        h = -h
    if v.sum() < 0:
        v = -v
    if np.any(h <= 0) or np.any(v <= 0):
        raise SpectralError(f"Perron vectors not strictly positive at alpha={alpha}: h={h}, v={v}")
    h = h / (model.pi @ h)
    v = v / (v @ h)
    return SpectralTriple(alpha, float(lam.real), h, v)


def kappa(model: ValidatedModel, alpha: float) -> float:
    F = cgm(model, float(alpha))
    return float(np.max(np.linalg.eigvals(F).real))


def kappa_prime(model: ValidatedModel, alpha: float) -> float:
    """d kappa / d alpha = v F'(alpha) h / (v h)."""
    t = perron(model, alpha)
    return float(t.v @ cgm_derivative(model, float(alpha)) @ t.h / (t.v @ t.h))


def kappa_derivative0(model: ValidatedModel) -> float:
    """Asymptotic drift: stationary mean of the per-state and transition-jump drifts."""
    n = model.n_states
    total = 0.0
    for i in range(n):
        rate = model.levy[i].mean_rate()
        for j in range(n):
            if j != i and model.Q[i, j] > 0:
                rate += model.Q[i, j] * model.transition_law(i, j).mean()
        total += model.pi[i] * rate
    return float(total)


def kappa_derivative0_fd(model: ValidatedModel, step: float = FD_STEP) -> float:
    """Central finite-difference estimate of kappa'(0), used as a cross-check."""
    return (kappa(model, step) - kappa(model, -step)) / (2 * step)


def phi_inverse(model: ValidatedModel, q: float, *, tol: float = 1e-12) -> float:
    """Largest root of kappa(alpha) = q on [0, inf) for a spectrally negative model.

    Newton iterates started to the right of the root decrease monotonically by
    convexity; bisection on the maintained bracket guards against round-off.
    """
    q = float(q)
    if q < 0:
        raise DomainViolation(f"q must be >= 0, got {q}")
    if not model.spectrally_negative:
        raise DomainViolation("phi_inverse needs a spectrally negative model")
    if q == 0.0 and kappa_derivative0(model) >= 0:
        return 0.0

    hi = 1.0
    while kappa(model, hi) <= q:
        hi *= 2.0
        if hi > 1e12:
            raise NoFiniteRoot(f"kappa stays below q={q} up to alpha={hi:g}")
    if q > 0:
        lo = 0.0
    else:
        # kappa'(0) < 0: the minimiser of kappa lies left of the second zero
        from scipy.optimize import minimize_scalar
        res = minimize_scalar(lambda a: kappa(model, a), bounds=(0.0, hi), method="bounded",
                              options={"xatol": 1e-12})
        lo = float(res.x)
        if kappa(model, lo) >= 0:
            raise NoFiniteRoot("could not bracket the non-zero root of kappa")

    x = hi
    for _ in range(200):
        t = perron(model, x)
        f = t.kappa - q
        if abs(f) <= tol * max(1.0, q):
            return x
        if f > 0:
            hi = x
        else:
            lo = x
        d = float(t.v @ cgm_derivative(model, x) @ t.h / (t.v @ t.h))
        nx = x - f / d if d > 0 else math.nan
        if not (lo < nx < hi):
            nx = 0.5 * (lo + hi)
        if abs(nx - x) <= 1e-15 * max(1.0, x):
            return nx
        x = nx
    return x
