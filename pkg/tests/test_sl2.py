import json
import random
from fractions import Fraction
from pathlib import Path

import pytest

from nalo import groups
from nalo.errors import DomainError
from nalo.sl2 import SL2, TransferSpec, anderson_concentration, commutator_pair, free_ball_check, transfer_matrix

FIXTURE = json.loads((Path(__file__).parent / "fixtures" / "anderson_rho.json").read_text())
PM = ({Fraction(1): Fraction(1, 2), Fraction(-1): Fraction(1, 2)},)


def test_transfer_matrix():
    g = transfer_matrix(0, 1, 0)
    assert g == SL2.element([[0, -1], [1, 0]])
    assert groups.element_order(SL2, g, 10) == 4
    g = transfer_matrix(Fraction(1, 3), 2, Fraction(-5, 7))
    assert SL2.inv(g) == SL2.element([[0, 1], [-1, Fraction(1, 3) + 2 * Fraction(-5, 7)]])


def test_commutator_pair_examples():
    cp = commutator_pair(0, 1, 1)
    assert cp.h1 == SL2.element([[1, 2], [0, 1]]) and cp.k0 == 1 and cp.entry == 2
    cp = commutator_pair(0, Fraction(1, 4), 1)
    assert cp.k0 == 4 and cp.h1p == SL2.element([[1, 2], [0, 1]]) and cp.h2p == SL2.element([[1, 0], [2, 1]])
    with pytest.raises(DomainError):
        commutator_pair(0, 1, 0)


def test_commutator_formulas_random():
    rng = random.Random(0)
    for _ in range(1000):
        E = Fraction(rng.randint(-20, 20), rng.randint(1, 9))
        lam = Fraction(rng.randint(1, 20), rng.randint(1, 9))
        a = Fraction(rng.choice([-1, 1]) * rng.randint(1, 20), rng.randint(1, 9))
        cp = commutator_pair(E, lam, a)
        assert cp.h1 == commutator_pair(0, lam, a).h1  # E cancels
        assert abs(cp.entry) >= 2


def test_free_ball_check():
    r = free_ball_check([[1, 2], [0, 1]], [[1, 0], [2, 1]], 3)
    assert r.sizes == (1, 5, 17, 53) and r.free and r.hypothesis_met
    r = free_ball_check([[1, 1], [0, 1]], [[1, 0], [1, 1]], 4)
    assert not r.free and not r.hypothesis_met
    r = free_ball_check([[1, 2], [0, 1]], [[1, 0], [2, 1]], 0)
    assert r.sizes == (1,) and r.free


def test_ball_containment():
    cp = commutator_pair(0, Fraction(1, 2), 1)
    assert cp.k0 == 2
    for k in (1, 2):
        big = groups.ball(SL2, [cp.g1, cp.g2], 2 * cp.k0 * k)
        small = groups.ball(SL2, [cp.h1p, cp.h2p], k)
        assert len(big) >= len(small) and small <= big


def test_anderson_exact_matches_fixture():
    prof = anderson_concentration(TransferSpec(0, 1, Fraction(1, 2), PM, 16))
    for n, r in zip(prof.ns, prof.rho):
        assert r == Fraction(FIXTURE["rho"][str(n)])
    assert all(prof.l2_ok) and prof.gamma_ok and "not certified" in prof.note
    assert prof.rho[11] < prof.rho[5]


def test_anderson_degenerate_and_gamma():
    prof = anderson_concentration(TransferSpec(0, 1, Fraction(1, 2), ({Fraction(1): Fraction(1)},), 6))
    assert prof.rho == (1,) * 6
    spec = TransferSpec(0, 1, 2, PM, 6)
    assert spec.gamma_pairs() == (False, [1])


def test_anderson_monte_carlo_reproducible():
    spec = TransferSpec(0, 1, Fraction(1, 2), PM, 60)
    a = anderson_concentration(spec, "monte_carlo", 20_000, 3)
    b = anderson_concentration(spec, "monte_carlo", 20_000, 3)
    assert a == b and a.rho[0] < 0.01
