import math

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.linalg import expm

from mapfluct import JumpLaw, LevyComponent, cgm, make_spec, validate
from mapfluct import identity as idt
from mapfluct import ladder as la
from mapfluct import simulate as sim
from mapfluct.errors import (CommuteGateFailed, DefectiveMatrix, DomainViolation, NoDensity,
                             ShapeViolation)
from mapfluct.suites import random_diagonalizable

from conftest import bm_phi, scalar_bm


# Frullani

def test_frullani_zero():
    np.testing.assert_allclose(idt.frullani_expm(np.zeros((3, 3)), 1.0), np.eye(3), atol=1e-14)


def test_frullani_scalar():
    assert idt.frullani_expm(np.array([[1.0]]), 1.0)[0, 0] == pytest.approx(0.5, abs=1e-10)


def test_frullani_random_vs_solve():
    rng = np.random.default_rng(11)
    for _ in range(100):
        A = random_diagonalizable(rng)
        got = idt.frullani_expm(A, 1.0)
        np.testing.assert_allclose(got @ (np.eye(3) + A), np.eye(3), atol=1e-8)


def test_frullani_complex_spectrum():
    A = np.array([[0.5, -1.0], [1.0, 0.5]])  # eigenvalues 0.5 +- i
    np.testing.assert_allclose(idt.frullani_expm(A, 2.0), 2.0 * np.linalg.inv(2.0 * np.eye(2) + A), atol=1e-8)


def test_frullani_defective():
    with pytest.raises(DefectiveMatrix):
        idt.frullani_expm(np.array([[1.0, 1.0], [0.0, 1.0]]), 1.0)


# Fourier density and half-line transforms

def test_density_standard_normal(scalar):
    d = idt.density_matrix(scalar, 1.0, [0.0, 1.0])
    np.testing.assert_allclose(d.values[:, 0, 0], stats.norm.pdf([0.0, 1.0]), atol=1e-6)


def test_density_mass_is_transition_matrix(model_a):
    t = 0.7
    x = np.linspace(-15, 15, 3001)
    d = idt.density_matrix(model_a, t, x)
    mass = integrate.simpson(d.values, x=x, axis=0)
    np.testing.assert_allclose(mass, expm(model_a.Q * t), atol=1e-6)


def test_density_needs_diffusion(model_c):
    with pytest.raises(NoDensity):
        idt.density_matrix(model_c, 1.0, [0.0])


def test_half_line_symmetry(scalar):
    assert idt.half_line_transform(scalar, 1.0, 0.0)[0, 0] == pytest.approx(0.5, abs=1e-5)


@pytest.mark.parametrize("mu, s2, t", [(0.5, 1.0, 1.0), (-1.0, 2.0, 0.3), (0.2, 0.5, 4.0)])
def test_half_line_scalar_probability(mu, s2, t):
    m = scalar_bm(mu, s2)
    p = stats.norm.sf(0.0, loc=mu * t, scale=math.sqrt(s2 * t))
    assert idt.half_line_transform(m, t, 0.0)[0, 0].real == pytest.approx(p, abs=1e-6)


def test_half_line_laplace_scalar():
    mu, s2, t, beta = 0.3, 1.5, 0.8, 0.9
    m = scalar_bm(mu, s2)
    sd = math.sqrt(s2 * t)
    exact, _ = integrate.quad(lambda x: math.exp(-beta * x) * stats.norm.pdf(x, mu * t, sd), 0, np.inf)
    got = idt.half_line_transform(m, t, 1j * beta, 0.0, "nonneg")[0, 0]
    assert got.real == pytest.approx(exact, abs=1e-6)
    assert abs(got.imag) < 1e-8


def test_half_lines_sum(model_a, model_b):
    for m in (model_a, model_b):
        for a, t in ((0.0, 0.5), (0.7, 1.0), (2.0, 0.1)):
            s = idt.half_line_transform(m, t, a, 0.0, "nonneg") + idt.half_line_transform(m, t, a, 0.0, "neg")
            np.testing.assert_allclose(s, expm(cgm(m, 1j * a) * t), atol=1e-5)


def test_half_line_vs_density_route(model_b):
    # independent route: integrate the inverted density over [0, inf)
    t, a = 0.5, 1.0
    x = np.linspace(0, 20, 4001)
    d = idt.density_matrix(model_b, t, x)
    w = np.exp(1j * a * x)[:, None, None]
    ref = integrate.simpson(w * d.values, x=x, axis=0)
    np.testing.assert_allclose(idt.half_line_transform(model_b, t, a), ref, atol=1e-6)


def test_commute_scalar(scalar):
    assert idt.commute_residual(scalar, 1.0, 1.0, 1.0) == 0.0


def test_commute_reported_model_a(model_a):
    r = idt.commute_residual(model_a, 1.0, 1.0, 1.0)
    assert np.isfinite(r) and r >= 0


# Spitzer-Rogozin

def test_rogozin_trivial(model_b):
    np.testing.assert_allclose(idt.rogozin_factor(model_b, 1.0, 0.0, 0.0, check_gate=False),
                               la.resolvent_I(model_b, 1.0).I_q, atol=1e-14)


def test_rogozin_scalar_sup():
    m = scalar_bm()
    assert idt.rogozin_factor(m, 0.5, 1.0, 0.0, "sup")[0, 0] == pytest.approx(0.5, abs=1e-3)


def test_rogozin_scalar_inf():
    a, s2, q, alpha, xi = 0.4, 1.0, 1.0, 0.5, 0.3
    m = scalar_bm(a, s2)
    psi = a * alpha + s2 * alpha ** 2 / 2
    expected = q * (bm_phi(q + xi, a, s2) - alpha) / (bm_phi(q, a, s2) * (q + xi - psi))
    assert idt.rogozin_factor(m, q, alpha, xi, "inf")[0, 0] == pytest.approx(expected, rel=1e-3)


def test_rogozin_gate_refuses(model_a):
    with pytest.raises(CommuteGateFailed):
        idt.rogozin_factor(model_a, 1.0, 0.5, 0.25)


def test_rogozin_domain(model_b):
    with pytest.raises(DomainViolation):
        idt.rogozin_factor(model_b, 1.0, -0.5, 0.0, check_gate=False)


# Kendall

def test_kendall_assumption(model_a):
    assert idt.kendall_assumption_check(scalar_bm(), [0.7]).independent
    rep = idt.kendall_assumption_check(model_a, [0.5, 2.0])
    assert rep.independent and rep.det > 0
    with pytest.raises(DomainViolation):
        idt.kendall_assumption_check(model_a, [1.0, 1.0])
    with pytest.raises(DomainViolation):
        idt.kendall_assumption_check(model_a, [1.0])


def test_kendall_scalar_bm_mc():
    m = scalar_bm(0.5, 1.0)
    fp = sim.first_passage(m, [0.5, 1.0], 200_000, seed=3, horizon=2.5)
    rep = idt.kendall_residual(m, fp, ((0.4, 0.6), (0.9, 1.1)), (0.5, 1.0))
    assert rep.max_deviation < 0.05
    assert rep.max_se_ratio < 4


def test_kendall_vacuous_cell():
    m = scalar_bm(0.5, 1.0)
    fp = sim.first_passage(m, [0.5], 20_000, seed=3, horizon=1.5)
    rep = idt.kendall_residual(m, fp, ((0.4, 0.6),), (0.0, 0.5))
    vac = [c for c in rep.cells if c.x == 0.0]
    assert vac and vac[0].vacuous and np.all(vac[0].mc == 0) and np.all(vac[0].analytic == 0)


def test_kendall_rejects_two_sided(model_d):
    fp = sim.first_passage(model_d, [0.5], 2000, seed=1, horizon=1.0)
    with pytest.raises(DomainViolation):
        idt.kendall_residual(model_d, fp, ((0.4, 0.6),), (0.5,))


# ballot

def drift_minus_cpp(n_states=1):
    law = JumpLaw.exponential(1.0)
    levy = [LevyComponent(2.0, 0.0, ((1.5, law),))] * n_states
    Q = [[0.0]] if n_states == 1 else [[-1.0, 1.0], [2.0, -2.0]]
    return validate(make_spec(Q, levy))


@pytest.mark.parametrize("n_states", [1, 2])
def test_ballot_exchangeable_cases(n_states):
    m = drift_minus_cpp(n_states)
    ks = sim.killed_stats(m, None, 200_000 // n_states, seed=5, horizon=1.0)
    rep = idt.ballot_residual(m, 1.0, (0.5, 1.0, 1.5, 2.0), ks)
    assert rep.passed, [(c.x, np.max(np.abs(c.lhs - c.rhs) / np.maximum(c.se, 1e-300))) for c in rep.cells]


def test_ballot_atom_and_impossible_region():
    m = drift_minus_cpp()
    ks = sim.killed_stats(m, None, 20_000, seed=5, horizon=1.0)
    rep = idt.ballot_residual(m, 1.0, (2.0, 3.0), ks)
    atom, beyond = rep.cells
    # the atom at ct is the no-jump event, probability exp(-1.5)
    assert atom.lhs[0, 0] == pytest.approx(math.exp(-1.5), abs=4 * math.sqrt(0.25 / 20_000))
    np.testing.assert_allclose(atom.lhs, atom.rhs, atol=1e-12)
    assert np.all(beyond.lhs == 0) and np.all(beyond.rhs == 0)


def test_ballot_shape(model_a):
    with pytest.raises(ShapeViolation):
        idt.ballot_drift(model_a)
