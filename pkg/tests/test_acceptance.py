"""Acceptance criteria 1-8 at their stated tolerances, sample sizes and time budgets.

Each test prints one ``ACCEPTANCE <k> PASS|FAIL`` line; the lines are also
collected and repeated in the terminal summary.
"""

import time

import pytest

from mapfluct import identity as idt
from mapfluct import load_builtin, suites

SEED = 7
RESULTS: dict[int, str] = {}


def report(k, title, checks, elapsed, budget):
    ok = all(c.passed for c in checks) and (budget is None or elapsed < budget)
    tag = "PASS" if ok else "FAIL"
    limit = f" (budget {budget:.0f}s)" if budget is not None else ""
    line = f"ACCEPTANCE {k} {tag}: {title} [{elapsed:.1f}s{limit}]"
    body = "\n".join("    " + c.line() for c in checks)
    RESULTS[k] = line + "\n" + body
    print(line)
    print(body)
    return ok


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def wh_checks():
    return timed(lambda: suites.wh_suite(load_builtin("MODEL-A"), paths=100_000, seed=SEED, q=1.0))


def test_acceptance_1_scalar_reduction():
    checks, dt = timed(suites.scalar_reduction_checks)
    assert len(suites.SCALAR_MODELS) * 4 == 12
    assert report(1, "scalar reduction, 12 (q, alpha, xi) triples, tol 1e-9", checks, dt, 1.0)


def test_acceptance_2_structure():
    checks, dt = timed(lambda: suites.structure_suite(load_builtin("MODEL-A")))
    assert report(2, "structure suite on MODEL-A", checks, dt, 10.0)


def test_acceptance_3_upcrossing_and_sup(wh_checks):
    checks, dt = wh_checks
    part = [c for c in checks if c.name.startswith(("up-crossing", "sup factor"))]
    assert len(part) == 2
    assert report(3, "up-crossing and sup factor vs MC, MODEL-A, 1e5 paths, 3 SE", part, dt, 120.0)


def test_acceptance_4_inf_and_key_identity(wh_checks):
    checks, dt = wh_checks
    part = [c for c in checks if c.name.startswith(("inf factor", "key identity"))]
    assert len(part) == 5
    assert report(4, "inf factor vs MC (3 SE) and key identity (1e-6), MODEL-A", part, dt, 120.0)


def test_acceptance_5_factorisation_product():
    m = load_builtin("MODEL-D")
    checks, dt = timed(lambda: suites.independence_suite(m, paths=200_000, seed=SEED))
    assert len(checks) == 6
    assert report(5, "general-MAP product vs q((q+xi)I-F(i alpha))^-1, MODEL-D, 3 SE", checks, dt, 300.0)


def test_acceptance_6_spitzer_rogozin():
    m = load_builtin("MODEL-B")
    checks, dt = timed(lambda: suites.rogozin_suite(m, 1.0, ((0.5, 0.25), (1.0, 0.0))))
    assert report(6, "Spitzer-Rogozin quadrature vs ladder, MODEL-B, rel 1e-3, gate 1e-3", checks, dt, 60.0)


def test_acceptance_7_kendall_and_ballot():
    t0 = time.perf_counter()
    a = load_builtin("MODEL-A")
    assume = idt.kendall_assumption_check(a, (0.5, 2.0))
    hyp = suites._le("Kendall hypothesis verdict (condition number)", assume.condition, 1e8)
    kend = suites.kendall_suite(a, paths=1_000_000, seed=SEED, q_list=())
    ball = suites.ballot_suite(load_builtin("MODEL-C"), paths=1_000_000, seed=SEED, t=1.0,
                               x_grid=(0.5, 1.0, 1.5))
    dt = time.perf_counter() - t0
    checks = [hyp] + kend + ball
    assert assume.independent
    assert report(7, "Kendall (5%, 4x4 grid, 1e6 paths) and ballot (3 SE, MODEL-C, 1e6 paths)",
                  checks, dt, 600.0)


def test_acceptance_8_time_reversal_ks():
    checks, dt = timed(lambda: suites.reversal_ks(load_builtin("MODEL-A"), n=100_000, seed=SEED + 1))
    assert report(8, "time-reversal identity in law, two-sample KS at 5%, n=1e5", checks, dt, None)
