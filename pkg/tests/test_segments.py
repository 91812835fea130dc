import math
import random
from dataclasses import replace
from fractions import Fraction

import pytest

from nalo import groups
from nalo.errors import NoFlatSegment
from nalo.measure import interval_measure, norms, walk_from_steps
from nalo.segments import WindowNorms, find_flat_segment, verify_segment

C5 = groups.cyclic(5)
H = groups.heisenberg()
UNITS = [(1, 0, 0), (0, 1, 0), (-1, 0, 0), (0, -1, 0)]


def heisenberg_box_walk(seed, n=64):
    """Lazy central steps interleaved with deterministic unit moves.

    Walks that spread in the horizontal directions too lose l2 mass like
    1/length, which is too fast for the second flatness inequality at n = 64.
    """
    rng = random.Random(seed)
    steps = []
    for i in range(n):
        if i % 2 == 0:
            steps.append({(0, 0, 0): Fraction(1, 2), (0, 0, 1): Fraction(1, 2)})
        else:
            steps.append({rng.choice(UNITS): 1})
    return walk_from_steps(H, steps)


def lazy_walk(seed, n=20):
    rng = random.Random(seed)
    return walk_from_steps(H, [{(0, 0, 0): Fraction(1, 2), rng.choice(UNITS): Fraction(1, 2)} for _ in range(n)])


def test_identical_delta_steps_are_trivially_flat():
    n = 40
    walk = walk_from_steps(C5, [{2: 1}] * n)
    rep = find_flat_segment(walk)
    assert (rep.i0, rep.l0) == (1, (n - 1) // 4)
    assert rep.coarse_ratio_sq == rep.ratio1_sq == 1
    assert set(rep.ratio2_sq) == {1}
    assert rep.i0 + 4 * rep.l0 <= n
    assert verify_segment(walk, rep)


def test_cyclic5_segment_passes_verification():
    walk = walk_from_steps(C5, [{0: Fraction(1, 2), 1: Fraction(1, 2)}] * 64)
    rep = find_flat_segment(walk, c=Fraction(1, 2))
    assert rep.c == Fraction(1, 2)
    assert rep.m_bound == 8 and len(rep.ratio2_sq) == 8
    assert verify_segment(walk, rep)


@pytest.mark.parametrize("seed", range(3))
def test_heisenberg_box_walk_segment(seed):
    walk = heisenberg_box_walk(seed)
    rep = find_flat_segment(walk)
    assert rep.c <= Fraction(1, 16)
    assert rep.l0star >= rep.m_bound
    assert verify_segment(walk, rep)


def test_descent_depth_bound():
    walk = heisenberg_box_walk(1)
    rep = find_flat_segment(walk)
    assert len(rep.chain) <= math.ceil(math.log(walk.n, 8)) + 1


def test_free_pair_has_no_flat_segment():
    R = groups.rational_matrix_2()
    h1, h2 = R.element([[1, 2], [0, 1]]), R.element([[1, 0], [2, 1]])
    step = {h1: Fraction(1, 4), R.inv(h1): Fraction(1, 4), h2: Fraction(1, 4), R.inv(h2): Fraction(1, 4)}
    walk = walk_from_steps(R, [step] * 12)
    with pytest.raises(NoFlatSegment) as exc:
        find_flat_segment(walk, c_halvings=2)
    assert exc.value.chain


def test_shifted_report_fails_on_non_flat_walk():
    # fair coins followed by a deterministic block: shifting mu into the
    # deterministic block makes its left extensions lose half their mass
    Z = groups.lattice(1)
    walk = walk_from_steps(Z, [{(1,): Fraction(1, 2), (-1,): Fraction(1, 2)}] * 40 + [{(1,): 1}] * 24)
    rep = find_flat_segment(walk)
    assert verify_segment(walk, rep)
    bad = replace(rep, j0=rep.j0 + rep.l0star)
    verdict = verify_segment(walk, bad)
    assert not verdict and "second flatness" in verdict.reason
    far = replace(rep, j0=rep.j0 + 3 * rep.l0star)
    assert "outside" in verify_segment(walk, far).reason


def test_memo_matches_direct_convolution_and_monotonicity():
    walk = lazy_walk(5)
    memo = WindowNorms(walk)
    for j in (10, 20):
        prev = None
        for i in range(j, 0, -1):
            sq = memo.sq(i, j)
            assert sq == norms(interval_measure(walk, i, j)).l2sq
            if prev is not None:
                assert sq <= prev
            prev = sq


def test_threshold_exponent_parameter():
    walk = walk_from_steps(C5, [{0: Fraction(1, 2), 1: Fraction(1, 2)}] * 64)
    rep = find_flat_segment(walk, tau=Fraction(1, 4))
    assert rep.tau == Fraction(1, 4)
    assert verify_segment(walk, rep)
