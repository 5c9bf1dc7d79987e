import math

import numpy as np
import pytest
from scipy import stats

from mapfluct import LevyComponent, make_spec, validate
from mapfluct import ladder as la
from mapfluct import simulate as sim
from mapfluct.suites import max_z

from conftest import bm_phi, scalar_bm


def test_deterministic_path():
    m = validate(make_spec([[0.0]], [LevyComponent(1.0, 0.0)]))
    p = sim.sample_path(m, horizon=2.0, seed=1)
    assert p.value_at_end() == pytest.approx(2.0)
    assert p.times[-1] == 2.0


def test_sample_path_reproducible(model_c):
    a = sim.sample_path(model_c, horizon=5.0, seed=4, replication_index=17)
    b = sim.sample_path(model_c, horizon=5.0, seed=4, replication_index=17)
    c = sim.sample_path(model_c, horizon=5.0, seed=4, replication_index=18)
    np.testing.assert_array_equal(a.x_right, b.x_right)
    assert not np.array_equal(a.times, c.times) or not np.array_equal(a.x_right, c.x_right)


def test_occupancy_matches_pi(model_a):
    occ = np.array([sim.sample_path(model_a, horizon=100.0, seed=9, replication_index=r).occupation(2) / 100.0
                    for r in range(300)])
    mean, se = occ.mean(axis=0), occ.std(axis=0, ddof=1) / math.sqrt(len(occ))
    assert np.all(np.abs(mean - model_a.pi) <= 3 * se)


def test_scalar_mean_sup(scalar):
    ks = sim.killed_stats(scalar, 1.0, 100_000, seed=2)
    se = ks.S.std(ddof=1) / math.sqrt(len(ks))
    assert abs(ks.S.mean() - 1 / math.sqrt(2)) <= 3 * se


def test_scalar_sup_is_exponential():
    m = scalar_bm(0.3, 1.0)
    ks = sim.killed_stats(m, 1.0, 50_000, seed=12)
    phi = bm_phi(1.0, 0.3)
    res = stats.kstest(ks.S, stats.expon(scale=1 / phi).cdf)
    assert res.pvalue > 0.05


def test_scalar_inf_law():
    # -I(e_q) is exponential with rate equal to the negative root, for BM
    a, s2, q = 0.3, 1.0, 1.0
    m = scalar_bm(a, s2)
    ks = sim.killed_stats(m, q, 50_000, seed=13)
    rate = (a + math.sqrt(a * a + 2 * s2 * q)) / s2
    assert stats.kstest(-ks.I, stats.expon(scale=1 / rate).cdf).pvalue > 0.05


def test_path_functionals_ordered(model_d):
    ks = sim.killed_stats(model_d, 1.0, 5_000, seed=1)
    assert np.all(ks.S >= np.maximum(ks.X, 0))
    assert np.all(ks.I <= np.minimum(ks.X, 0))
    assert np.all((0 <= ks.G_bar) & (ks.G_bar <= ks.e_q))
    assert np.all((0 <= ks.G) & (ks.G <= ks.e_q))


def test_deterministic_first_passage():
    m = validate(make_spec([[0.0]], [LevyComponent(1.0, 0.0)]))
    fp = sim.first_passage(m, 2.0, 50, seed=0, horizon=10.0)
    np.testing.assert_allclose(fp.tau[:, 0], 2.0)
    assert not fp.killed.any()


def test_scalar_first_passage_transform():
    m = scalar_bm(1.0, 1.0)
    fp = sim.first_passage(m, 0.5, 100_000, seed=6, q=1.0)
    est = sim.first_passage_transform(fp, 0, 0.0)
    target = math.exp(-(-1 + math.sqrt(3)) * 0.5)
    assert abs(est.value[0, 0] - target) <= 3 * est.stderr[0, 0]


def test_first_passage_matches_ladder(model_c):
    fp = sim.first_passage(model_c, [0.5, 1.0], 40_000, seed=6, q=1.0)
    for k, x in enumerate((0.5, 1.0)):
        est = sim.first_passage_transform(fp, k, 0.0)
        assert max_z(est.value, est.stderr, la.up_crossing(model_c, 1.0, 0.0, x)) < 4


def test_empirical_resolvent(model_a):
    ks = sim.killed_stats(model_a, 1.0, 20_000, seed=3)
    est = sim.estimate_transform(ks, 0.0, 0.0, "one", "eq")
    np.testing.assert_allclose(est.value.sum(axis=1), 1.0, atol=1e-12)
    assert max_z(est.value, est.stderr, la.resolvent_I(model_a, 1.0).I_q) < 4


@pytest.mark.parametrize("threads", [2, 4])
def test_bit_identical_across_threads(model_c, threads):
    a = sim.killed_stats(model_c, 1.0, 20_000, seed=21, threads=1)
    b = sim.killed_stats(model_c, 1.0, 20_000, seed=21, threads=threads)
    for f in ("e_q", "X", "S", "I", "G_bar", "G", "j_eq", "j_Gbar", "j_G"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))


def test_different_seeds_differ(model_a):
    a = sim.killed_stats(model_a, 1.0, 1000, seed=1)
    b = sim.killed_stats(model_a, 1.0, 1000, seed=2)
    assert not np.array_equal(a.X, b.X)


def test_stderr_scaling(model_a):
    small = sim.estimate_transform(sim.killed_stats(model_a, 1.0, 10_000, seed=4), 0.7, 0.3)
    big = sim.estimate_transform(sim.killed_stats(model_a, 1.0, 40_000, seed=4), 0.7, 0.3)
    ratio = small.stderr / big.stderr
    np.testing.assert_allclose(ratio, 2.0, rtol=0.1)


def test_jackknife_matches_delta_for_mean():
    rng = np.random.default_rng(0)
    x = rng.normal(size=20_000)
    val, se = sim.jackknife(lambda s: s[0].mean(), [x], groups=50)
    assert val == pytest.approx(x.mean())
    assert se == pytest.approx(x.std(ddof=1) / math.sqrt(x.size), rel=0.3)


def test_csv_dump(tmp_path, model_a):
    ks = sim.killed_stats(model_a, 1.0, 10, seed=1)
    p = tmp_path / "s.csv"
    ks.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "rep,start_state,e_q,X,S,I,G_bar,G,j_eq,j_Gbar,j_G"
    assert len(lines) == 1 + len(ks)


# Monte Carlo against the closed-form factors, including the state at G

@pytest.mark.parametrize("cond, sel", [("at_eq", "eq"), ("at_G", "Gbar")])
def test_sup_factor_mc(model_b, cond, sel):
    ks = sim.killed_stats(model_b, 1.0, 50_000, seed=31)
    est = sim.estimate_transform(ks, 0.6, 0.4, "sup", sel)
    assert max_z(est.value, est.stderr, la.sup_factor(model_b, 1.0, 0.6, 0.4, cond)) < 4


@pytest.mark.parametrize("name", ["model_b", "cyclic3"])
def test_inf_factor_at_G_mc(name, request):
    m = request.getfixturevalue(name)
    ks = sim.killed_stats(m, 1.0, 50_000, seed=32)
    for alpha, xi in ((0.4, 0.2), (0.2, 0.0)):
        at_g = sim.estimate_transform(ks, alpha, xi, "inf", "G")
        at_eq = sim.estimate_transform(ks, alpha, xi, "inf", "eq")
        assert max_z(at_g.value, at_g.stderr, la.inf_factor(m, 1.0, alpha, xi, "at_G")) < 4
        assert max_z(at_eq.value, at_eq.stderr, la.inf_factor(m, 1.0, alpha, xi, "at_eq")) < 4


def test_literal_inf_at_G_is_rejected(model_b):
    # the form ending in diag(Xi_hat e)^-1 diag(pi) misses the MC estimate by many SE
    ks = sim.killed_stats(model_b, 1.0, 50_000, seed=33)
    est = sim.estimate_transform(ks, 0.4, 0.2, "inf", "G")
    literal = la._inf_factor_formula(model_b, 1.0, 0.4, 0.2, "at_G_literal")
    assert max_z(est.value, est.stderr, literal) > 10
