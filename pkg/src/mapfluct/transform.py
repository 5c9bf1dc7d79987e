"""Exponential tilting and time reversal, evaluated lazily on cumulant matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cumulant import SpectralTriple, _perron_vectors, cgm, perron
from .errors import DomainViolation, SpectralError
from .model import ValidatedModel, reversed_spec, stationary, validate


@dataclass(frozen=True, eq=False)
class TiltedView:
    """The MAP under the measure with density exp(gamma X(t) - kappa(gamma) t) h_J(t)/h_J(0)."""

    base: ValidatedModel
    gamma: float
    base_triple: SpectralTriple = field(repr=False)

    def F(self, alpha: float) -> np.ndarray:
        lo, hi = self.base.domain()
        if not (lo < alpha + self.gamma < hi):
            raise DomainViolation(f"alpha + gamma = {alpha + self.gamma:g} outside ({lo:g}, {hi:g})")
        h = self.base_triple.h
        return (cgm(self.base, alpha + self.gamma) * h[None, :]) / h[:, None] \
            - self.base_triple.kappa * np.eye(self.base.n_states)

    @property
    def Q(self) -> np.ndarray:
        """Generator of J under the tilted measure, F_gamma(0)."""
        return self.F(0.0)

    def kappa(self, alpha: float) -> float:
        """Leading eigenvalue of F_gamma(alpha), computed from the tilted matrix itself."""
        return float(np.max(np.linalg.eigvals(self.F(alpha)).real))

    def kappa_formula(self, alpha: float) -> float:
        """kappa(alpha + gamma) - kappa(gamma) from two base-model evaluations."""
        return perron(self.base, alpha + self.gamma).kappa - self.base_triple.kappa

    def h(self, alpha: float) -> np.ndarray:
        """Right Perron vector of F_gamma(alpha), normalised by the tilted stationary law."""
        Fg = self.F(alpha)
        _, h, _ = _perron_vectors(Fg)
        h = np.abs(h.real)
        pi_g = stationary(self.Q).pi
        return h / (pi_g @ h)


def tilt(model: ValidatedModel, gamma: float) -> TiltedView:
    lo, hi = model.domain()
    if not (lo < gamma < hi):
        raise DomainViolation(f"gamma={gamma:g} outside ({lo:g}, {hi:g})")
    return TiltedView(model, float(gamma), perron(model, gamma))


@dataclass(frozen=True, eq=False)
class ReversedView:
    """Cumulant-level view of the time-reversed MAP under P_pi."""

    base: ValidatedModel
    model: ValidatedModel = field(repr=False)

    @property
    def pi(self) -> np.ndarray:
        return self.base.pi

    @property
    def Q(self) -> np.ndarray:
        pi = self.base.pi
        return (self.base.Q.T * pi[None, :]) / pi[:, None]

    def F(self, alpha) -> np.ndarray:
        """diag(pi)^-1 F(alpha)^T diag(pi)."""
        pi = self.base.pi
        return (cgm(self.base, alpha).T * pi[None, :]) / pi[:, None]

    def kappa(self, alpha: float) -> float:
        return float(np.max(np.linalg.eigvals(self.F(alpha)).real))

    def h(self, alpha: float) -> np.ndarray:
        """Right Perron vector of the reversed cumulant.

        Scaled so that it pairs to one with the dual left vector h(alpha) diag(pi)
        of the forward model.  With that pairing diag(pi) h_hat = v holds exactly;
        the independent normalisation pi h_hat = 1 would only give it up to the
        factor sum(v).
        """
        _, hh, _ = _perron_vectors(self.F(alpha))
        hh = hh.real
        if hh.sum() < 0:
            hh = -hh
        if np.any(hh <= 0):
            raise SpectralError(f"reversed Perron vector not positive at alpha={alpha}")
        hf = perron(self.base, alpha).h
        return hh / ((hf * self.base.pi) @ hh)


def reverse(model: ValidatedModel) -> ReversedView:
    return ReversedView(model, validate(reversed_spec(model)))
