import itertools
import random
from dataclasses import replace
from fractions import Fraction

import pytest

from nalo import groups
from nalo.errors import DomainError, NoStructureFound
from nalo.measure import Measure, norms, translate_gap_sq, walk_from_steps
from nalo.nilprog import CosetNilprogression, Progression
from nalo.structure import (
    StabilizationError,
    StructureParams,
    SubgroupOracle,
    TruncationParams,
    approx_group_cover,
    build_coset_tree,
    detect_structure,
    disjoint_translates_ok,
    maximal_disjoint_translates,
    mult_energy,
    stabilize_collections,
    truncate_measure,
    verify_conclusion,
)

S4 = groups.symmetric(4)
V4 = [(0, 1, 2, 3), (1, 0, 3, 2), (2, 3, 0, 1), (3, 2, 1, 0)]
Z = groups.lattice(1)


def trivial_hp(ctx, H=None):
    return CosetNilprogression(Progression(ctx, (ctx.identity(),), (1,)), H)


def klein_walk(seed=0, n=24):
    rng = random.Random(seed)
    return walk_from_steps(S4, [{g: Fraction(1, 2) for g in rng.sample(V4, 2)} for _ in range(n)])


def heisenberg_coin_walk(seed=0, n=40):
    # every step is {g, g z} with g a unit move or id, so all atoms lie in P(u1,u2,z;1,1,1)
    H = groups.heisenberg()
    rng = random.Random(seed)
    moves = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (-1, 0, 0), (0, -1, 0)]
    steps = []
    for _ in range(n):
        g = rng.choice(moves)
        steps.append({g: Fraction(1, 2), H.mul(g, (0, 0, 1)): Fraction(1, 2)})
    return walk_from_steps(H, steps)


# ---------------------------------------------------------------- energy
def test_energy_examples():
    assert mult_energy(S4, V4, V4) == 4**3
    assert mult_energy(Z, [(0,), (1,)], [(0,), (1,)]) == 6
    B = [(3,), (7,), (8,)]
    assert mult_energy(Z, [(0,)], B) == len(B)


def test_energy_matches_quadruple_count():
    rng = random.Random(1)
    for _ in range(20):
        B1 = rng.sample(list(itertools.permutations(range(4))), 4)
        B2 = rng.sample(list(itertools.permutations(range(4))), 3)
        brute = sum(
            S4.mul(a, b) == S4.mul(c, d) for a in B1 for c in B1 for b in B2 for d in B2
        )
        assert mult_energy(S4, B1, B2) == brute


# ------------------------------------------------------------ truncation
def test_truncation_params():
    p = TruncationParams.from_c(Fraction(1, 16))
    assert (p.K, p.M, p.delta) == (16, 160, Fraction(1, 25600))


def test_truncation_examples():
    p = TruncationParams(2)
    uni = Measure(Z, {(i,): Fraction(1, 5) for i in range(5)})
    t = truncate_measure(uni, p)
    assert not len(t.heavy) and not len(t.light) and t.middle.atoms == uni.atoms
    t = truncate_measure(Measure.delta(Z, (4,)), p)
    assert not len(t.heavy) and not len(t.light) and t.middle.atoms == {(4,): 1}


def test_truncation_bounds_random():
    rng = random.Random(2)
    perms = list(itertools.permutations(range(4)))
    for _ in range(300):
        k = rng.randint(1, 24)
        w = [rng.choice([1, 1, 1, 2, 50, 400]) for _ in range(k)]
        mu = Measure(S4, {g: Fraction(x, sum(w)) for g, x in zip(rng.sample(perms, k), w)})
        p = TruncationParams(Fraction(rng.randint(1, 8), rng.randint(1, 4)))
        t = truncate_measure(mu, p)
        total = {}
        for part in (t.heavy, t.light, t.middle):
            for g, v in part.atoms.items():
                assert g not in total
                total[g] = v
        assert total == mu.atoms
        assert t.heavy_l1 <= 1 / p.M and t.light_l2sq <= p.delta * norms(mu).l2sq
        assert t.heavy_ok and t.light_ok


# ----------------------------------------------------------------- covers
def test_cover_subgroup_and_interval():
    assert approx_group_cover(S4, V4, 1).X == ((0, 1, 2, 3),)
    for N in (1, 5, 100):
        res = approx_group_cover(Z, [(i,) for i in range(-N, N + 1)], 3)
        assert res.ok and res.K <= 3 and set(res.X) <= {(-N,), (0,), (N,)}


def test_cover_of_symmetric_triple():
    C = groups.cyclic(11)
    res = approx_group_cover(C, [0, 3, 8], 3)
    AA = {(a + b) % 11 for a in (0, 3, 8) for b in (0, 3, 8)}
    assert len(AA) == 5 and res.K <= 3
    assert AA <= {(x + a) % 11 for x in res.X for a in (0, 3, 8)}
    assert set(res.X) == {(-x) % 11 for x in res.X}


def test_cover_rejects_asymmetric():
    with pytest.raises(DomainError, match="inverse missing"):
        approx_group_cover(Z, [(0,), (1,)], 3)
    with pytest.raises(DomainError, match="identity missing"):
        approx_group_cover(Z, [(1,), (-1,)], 3)


# ---------------------------------------------------- translate collections
def interval_hp(N):
    return CosetNilprogression(Progression(Z, ((1,),), (N,)))


def test_collection_zero_threshold_and_empty_pool():
    rng = random.Random(3)
    mu = Measure(Z, {(i,): Fraction(w, 21) for i, w in enumerate([1, 2, 3, 4, 5, 6])})
    hp = interval_hp(2)
    pool = [(rng.randint(-30, 30),) for _ in range(40)]
    assert maximal_disjoint_translates(mu, hp, 0, pool).reps == ((0,),)
    c = maximal_disjoint_translates(mu, hp, 2, [])
    assert c.reps == ((0,),) and c.N == 0 and c.maximal


def test_collection_interval_oracle():
    N = 3
    mu = Measure(Z, {(i,): Fraction(1, 10) for i in range(10)})
    pool = [(k,) for k in range(-3 * N, 3 * N + 1)]
    c = maximal_disjoint_translates(mu, interval_hp(N), 2, pool)
    # integer greedy: translates of [-N, N] are disjoint iff centres differ by more than 2N
    reps = [0]
    for k in range(-3 * N, 3 * N + 1):
        if all(abs(k - r) > 2 * N for r in reps):
            reps.append(k)
    assert [r[0] for r in c.reps] == reps == [0, -9, 7]
    assert c.maximal and c.covered and disjoint_translates_ok(c)
    assert all(any(abs(k - r) <= 2 * N for r in reps) for k in range(-3 * N, 3 * N + 1))


def test_stabilize_examples():
    # distances 0 everywhere: every level is the same collection
    mu = Measure(S4, {g: Fraction(1, 4) for g in V4})
    st = stabilize_collections(mu, trivial_hp(S4, V4), 1, 2, 4, V4)
    assert st.level == 1 and st.reps == ((0, 1, 2, 3),)
    with pytest.raises(StabilizationError):
        stabilize_collections(mu, trivial_hp(S4, V4), 1, 2, 0, V4)


def test_stabilize_geometric_candidates():
    # mu uniform on [0, 64): d(k, id)^2 = 2|k|/64, so k = 1, 4, 16 sit at 1/32, 1/8, 1/2
    mu = Measure(Z, {(i,): Fraction(1, 64) for i in range(64)})
    pool = [(s * k,) for k in (1, 4, 16) for s in (1, -1)]
    st = stabilize_collections(mu, trivial_hp(Z), 1, 2, 8, pool)
    assert st.sizes[:5] == (7, 5, 3, 1, 1)
    assert st.level == 4
    for j in range(8):
        assert set(st.collections[j + 1].reps) <= set(st.collections[j].reps)


# --------------------------------------------------------------- coset tree
def test_tree_single_and_pair():
    C = groups.cyclic(12)
    mu = Measure(C, {0: Fraction(1, 2), 1: Fraction(1, 4), 5: Fraction(1, 4)})
    hp = CosetNilprogression(Progression(C, (2,), (1,)))
    orc = SubgroupOracle(hp)
    t = build_coset_tree([0], mu, orc)
    assert t.X == (0,) and not t.edges and t.valid
    t = build_coset_tree([0, 1], mu, orc)
    (a, b, w), = t.edges
    assert w == t.dT_sq[0][1] and t.valid


def test_tree_four_cosets_brute_force():
    C = groups.cyclic(12)
    rng = random.Random(5)
    for _ in range(5):
        w = [rng.randint(0, 5) for _ in range(12)]
        w[0] += 1
        mu = Measure(C, {i: Fraction(x, sum(w)) for i, x in enumerate(w) if x})
        hp = CosetNilprogression(Progression(C, (4,), (1,)))
        orc = SubgroupOracle(hp)
        assert orc.exact and orc.members == {0, 4, 8}
        t = build_coset_tree([0, 1, 2, 3], mu, orc)
        l2 = norms(mu).l2sq
        # d_T by explicit translates over the whole coset t' <HP> x_t^-1
        for a in range(4):
            for b in range(4):
                if a != b:
                    brute = min(translate_gap_sq(mu, g, 0) / l2 for g in range(12) if (g + t.X[a] - b) % 4 == 0)
                    assert t.dT_sq[a][b] == brute
        adj = {v: {} for v in range(4)}
        for a, b, wt in t.edges:
            adj[a][b] = adj[b][a] = wt

        def path(a, b, seen=()):
            if a == b:
                return []
            for u, wt in adj[a].items():
                if u not in seen:
                    rest = path(u, b, seen + (a,))
                    if rest is not None:
                        return [wt] + rest
            return None

        for a, b in itertools.combinations(range(4), 2):
            assert max(path(a, b)) <= t.dT_sq[a][b]
        assert t.valid


# ------------------------------------------------------------- detection
def test_detect_subgroup_walk():
    w = klein_walk()
    rep = detect_structure(w)
    assert rep.hp.H == frozenset(V4) and rep.hp_size == 4
    assert rep.X == ((0, 1, 2, 3),)
    assert rep.records and all(r.lam == 0 for r in rep.records)
    assert verify_conclusion(rep, w)


def test_detect_heisenberg_walk_and_determinism():
    w = heisenberg_coin_walk()
    rep = detect_structure(w)
    assert rep.max_lam is not None and rep.max_lam <= 1
    assert rep.hp_size * rep.rho <= 8
    assert rep.tree.valid and rep.tt_ok
    assert verify_conclusion(rep, w)
    assert detect_structure(w).to_json() == rep.to_json()


def test_tampered_report_fails():
    w = heisenberg_coin_walk()
    rep = detect_structure(w)
    k = next(i for i, r in enumerate(rep.records) if r.lam and r.lam > 0)
    bad = list(rep.records)
    bad[k] = replace(bad[k], lam=Fraction(0))
    v = verify_conclusion(replace(rep, records=tuple(bad)), w)
    assert not v and f"i={bad[k].i}" in v.reason


def test_trivial_structure_only_for_degenerate_steps():
    H = groups.heisenberg()
    det = walk_from_steps(H, [{(1, 0, 0): 1}, {(0, 1, 0): 1}] * 10)
    rep = detect_structure(det)
    assert rep.records == () and verify_conclusion(rep, det)
    # a non-degenerate step forces a != a', which lambda = 0 with H = {id} cannot cover
    w = heisenberg_coin_walk()
    rep = detect_structure(w)
    r = rep.records[0]
    forged = replace(rep, hp=trivial_hp(H), X=((0, 0, 0),), records=(replace(r, lam=Fraction(0), sigma=(((0, 0, 0), (0, 0, 0)),)),))
    assert not verify_conclusion(forged, w)


def test_free_pair_reports_no_structure():
    R = groups.rational_matrix_2()
    h1, h2 = R.element([[1, 2], [0, 1]]), R.element([[1, 0], [2, 1]])
    step = {h1: Fraction(1, 4), R.inv(h1): Fraction(1, 4), h2: Fraction(1, 4), R.inv(h2): Fraction(1, 4)}
    with pytest.raises(NoStructureFound):
        detect_structure(walk_from_steps(R, [step] * 12), params=StructureParams(c_halvings=2))


def test_order_argument_on_subgroup_walk():
    w = klein_walk(seed=4)
    rep = detect_structure(w)
    # lambda = 0 < 1 / max N_i, so the order bound d|H| is exercised
    assert all(r.lam * max(rep.hp.P.lengths) < 1 for r in rep.records)
    for r in rep.records:
        g = S4.mul(r.a, S4.inv(r.a_prime))
        assert groups.element_order(S4, g, len(rep.hp.H)) is not None
    assert verify_conclusion(rep, w)
