import itertools
import random
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from nalo import groups
from nalo.errors import DomainError, ResourceError
from nalo.measure import (
    Measure,
    SemiMetric,
    WalkSpec,
    convolve,
    d_mu,
    energy_identity,
    interval_measure,
    norms,
    rho_exact,
    rho_monte_carlo,
    typical_pairs,
    validate_p0,
    walk_from_steps,
)
from nalo.rational import power_bounds

from .conftest import random_measure

Z1 = groups.lattice(1)
S3 = groups.symmetric(3)


def pm(a):
    return {(a,): Fraction(1, 2), (-a,): Fraction(1, 2)}


def enumerate_walk(ctx, steps):
    """Oracle: sum over every outcome sequence, multiplying g_n ... g_1 directly."""
    dist = Counter()
    for picks in itertools.product(*[list(s.items()) for s in steps]):
        g = ctx.identity()
        w = Fraction(1)
        for elem, p in picks:
            g = ctx.mul(elem, g)
            w *= p
        dist[g] += w
    return dist


def test_measure_rejects_bad_weights():
    with pytest.raises(DomainError):
        Measure(Z1, {(0,): Fraction(1, 2)})
    with pytest.raises(DomainError):
        Measure(Z1, {(0,): Fraction(3, 2), (1,): Fraction(-1, 2)})
    mu = Measure(Z1, {(0,): 1, (1,): 0})
    assert mu.support == [(0,)]


def test_convolution_examples():
    g, h = (0, 1, 2), (1, 0, 2)
    assert convolve(Measure.delta(S3, g), Measure.delta(S3, h)) == Measure.delta(S3, S3.mul(g, h))
    u = Measure(Z1, pm(1))
    assert convolve(u, u).atoms == {(-2,): Fraction(1, 4), (0,): Fraction(1, 2), (2,): Fraction(1, 4)}
    t = Measure.uniform(S3, [(1, 0, 2)])
    assert convolve(t, t) == Measure.delta(S3, S3.identity())


def test_convolution_order_is_product_order():
    # mu * nu is the law of x*y with x ~ mu, y ~ nu
    a, b = (1, 0, 2), (0, 2, 1)
    mu, nu = Measure.delta(S3, a), Measure.delta(S3, b)
    assert convolve(mu, nu).support == [S3.mul(a, b)]
    assert S3.mul(a, b) != S3.mul(b, a)


def test_convolution_cap():
    mu = Measure.uniform(Z1, [(i,) for i in range(50)])
    nu = Measure.uniform(Z1, [(100 * i,) for i in range(50)])
    with pytest.raises(ResourceError) as exc:
        convolve(mu, nu, cap=100)
    assert "support_so_far" in exc.value.partial


def test_norm_examples():
    n = norms(Measure.delta(S3, (0, 1, 2)))
    assert (n.l1, n.l2sq, n.linf) == (1, 1, 1)
    n = norms(Measure.uniform(Z1, [(i,) for i in range(7)]))
    assert (n.l1, n.l2sq, n.linf) == (1, Fraction(1, 7), Fraction(1, 7))
    n = norms(Measure(Z1, {(0,): Fraction(1, 3), (1,): Fraction(2, 3)}))
    assert (n.l1, n.l2sq, n.linf) == (1, Fraction(5, 9), Fraction(2, 3))


def test_rho_examples():
    C7 = groups.cyclic(7)
    walk = walk_from_steps(C7, [{1: Fraction(1, 2), 6: Fraction(1, 2)}])
    assert rho_exact(walk).rho == Fraction(1, 2)

    walk = walk_from_steps(Z1, [pm(1)] * 4)
    assert rho_exact(walk).rho == Fraction(3, 8)
    assert max(enumerate_walk(Z1, [pm(1)] * 4).values()) == Fraction(3, 8)

    C3 = groups.cyclic(3)
    step = {0: Fraction(1, 2), 1: Fraction(1, 2)}
    oracle = enumerate_walk(C3, [step] * 3)
    assert sorted(oracle.values()) == [Fraction(2, 8), Fraction(3, 8), Fraction(3, 8)]
    res = rho_exact(walk_from_steps(C3, [step] * 3))
    assert res.rho == Fraction(3, 8) and oracle[res.argmax] == Fraction(3, 8)


def test_interval_measure_matches_enumeration_nonabelian(rng):
    S4 = groups.symmetric(4)
    steps = [random_measure(S4, rng, 3) for _ in range(5)]
    walk = WalkSpec(S4, steps)
    oracle = enumerate_walk(S4, [s.atoms for s in steps[1:4]])
    assert interval_measure(walk, 2, 4).atoms == dict(oracle)
    # reversed order is a genuinely different measure in general
    rev = enumerate_walk(S4, [s.atoms for s in reversed(steps[1:4])])
    assert interval_measure(walk, 2, 4, reverse=True).atoms == dict(rev)


def test_rho_lower_bound_by_single_path(rng):
    S4 = groups.symmetric(4)
    for _ in range(30):
        steps = [random_measure(S4, rng) for _ in range(4)]
        walk = WalkSpec(S4, steps)
        path = Fraction(1)
        for s in steps:
            path *= min(s.atoms.values())
        assert rho_exact(walk).rho >= path


def test_monte_carlo():
    C = groups.cyclic(5)
    est = rho_monte_carlo(walk_from_steps(C, [{3: 1}]), trials=50, seed=1)
    assert est.collision == 1 and est.max_bin == 1
    walk = walk_from_steps(Z1, [pm(1)] * 2)
    est = rho_monte_carlo(walk, trials=100_000, seed=12345)
    assert abs(est.collision - 3 / 8) < 5e-3
    assert est == rho_monte_carlo(walk, trials=100_000, seed=12345)
    tiny = rho_monte_carlo(walk, trials=2, seed=3)
    assert tiny.trials == 2
    with pytest.raises(DomainError):
        rho_monte_carlo(walk, trials=1, seed=0)


def test_d_mu_examples(rng):
    mu = Measure.uniform(Z1, [(0,), (1,)])
    assert d_mu(mu, (0,), (0,)).sq == 0
    d = d_mu(mu, (0,), (1,))
    assert d.sq == 1 and d.value == 1.0
    S4 = groups.symmetric(4)
    from .conftest import random_element

    for _ in range(200):
        m = random_measure(S4, rng, 5)
        g, h, k = (random_element(S4, rng) for _ in range(3))
        metric = SemiMetric(m)
        assert metric.sq(S4.mul(g, k), S4.mul(h, k)) == metric.sq(g, h)


def test_d_mu_matches_explicit_translates(rng):
    from nalo.measure import translate_gap_sq
    from .conftest import random_element

    H = groups.heisenberg()
    for _ in range(50):
        m = random_measure(H, rng, 6)
        g, h = random_element(H, rng), random_element(H, rng)
        assert d_mu(m, g, h).sq * norms(m).l2sq == translate_gap_sq(m, g, h)


def test_energy_identity_exact(rng):
    S4 = groups.symmetric(4)
    for _ in range(20):
        mu, eta = random_measure(S4, rng, 6), random_measure(S4, rng, 4)
        lhs, rhs = energy_identity(mu, eta)
        assert lhs == rhs


def test_typical_pairs_basic():
    mu = Measure.uniform(Z1, [(i,) for i in range(10)])
    res = typical_pairs(mu, Measure.delta(Z1, (3,)), 0)
    assert res.pairs == {((3,), (3,))} and res.atypical_mass == 0


@pytest.mark.parametrize("n0", [4, 9, 16, 25])
def test_typical_pair_mass_bound(n0):
    # mu flat on a long interval, eta a short smear: ||mu*eta|| is close to ||mu||
    eps = Fraction(1, 2)
    eta = Measure(Z1, {(0,): Fraction(1, 3), (1,): Fraction(1, 3), (2,): Fraction(1, 3)})
    length = 1
    while True:
        mu = Measure.uniform(Z1, [(i,) for i in range(length)])
        ratio_sq = norms(convolve(mu, eta)).l2sq / norms(mu).l2sq
        if ratio_sq >= (1 - Fraction(1, n0)) ** 2:
            break
        length += 1
    thr_sq, _ = power_bounds(n0, -(1 - eps))  # exact for perfect squares
    res = typical_pairs(mu, eta, thr_sq)
    bound = 4 * power_bounds(n0, -eps)[0]
    assert res.atypical_mass <= bound


def test_validate_p0():
    C = groups.cyclic(5)
    walk = walk_from_steps(C, [{0: Fraction(1, 2), 1: Fraction(1, 2)}] * 3, p0=Fraction(1, 3))
    assert validate_p0(walk) == (True, [])
    walk = walk_from_steps(C, [{0: Fraction(9, 10), 1: Fraction(1, 10)}], p0=Fraction(1, 8))
    ok, bad = validate_p0(walk)
    assert not ok and bad == [(1, 1, Fraction(1, 10))]
    walk = walk_from_steps(C, [{0: Fraction(9, 10), 1: Fraction(1, 10)}], p0=0)
    assert validate_p0(walk)[0]


@st.composite
def s4_measure(draw):
    S4 = groups.symmetric(4)
    perms = list(itertools.permutations(range(4)))
    idx = draw(st.lists(st.integers(0, 23), min_size=1, max_size=8, unique=True))
    ws = draw(st.lists(st.integers(1, 9), min_size=len(idx), max_size=len(idx)))
    tot = sum(ws)
    return Measure(S4, {perms[i]: Fraction(w, tot) for i, w in zip(idx, ws)})


@settings(max_examples=150, deadline=None)
@given(s4_measure(), s4_measure(), s4_measure())
def test_young_chain_and_associativity(mu, nu, ka):
    a, b = norms(mu), norms(nu)
    assert a.linf**2 <= a.l2sq <= a.linf
    c = norms(convolve(mu, nu))
    assert c.linf**2 <= a.l2sq * b.l2sq
    assert c.l2sq <= min(a.l2sq, b.l2sq)
    assert convolve(convolve(mu, nu), ka) == convolve(mu, convolve(nu, ka))


@settings(max_examples=100, deadline=None)
@given(s4_measure(), st.integers(0, 23), st.integers(0, 23), st.integers(0, 23))
def test_d_mu_semimetric(mu, i, j, k):
    S4 = groups.symmetric(4)
    perms = list(itertools.permutations(range(4)))
    g, h, x = perms[i], perms[j], perms[k]
    m = SemiMetric(mu)
    assert m.sq(g, h) == m.sq(h, g)
    assert m.sq(g, S4.identity()) == m.sq(S4.inv(g), S4.identity())
    assert m(g, h).value <= (m(g, x).value + m(x, h).value) * (1 + 1e-9)
