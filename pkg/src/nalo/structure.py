"""Inverse-theorem machinery: energy, truncation, covers, translate collections,
the coset tree and the end-to-end structure detection pipeline.

The existence step of the theory is ineffective, so :func:`detect_structure`
searches a finite catalog of candidate coset nilprogressions and certifies the
best one it finds. A failed search is reported as "no structure found", which
is not a proof that none exists.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import DomainError, NoFlatSegment, NoStructureFound, NormExceeded, ResourceError
from .groups import GroupContext, element_order, product_set, subgroup_closure
from .measure import Measure, SemiMetric, WalkSpec, norms, rho_exact, typical_pairs
from .nilprog import CosetNilprogression, Progression, enumerate_hp, hp_x_norm, word_search
from .rational import as_fraction, power_bounds
from .segments import SegmentReport, Verdict, WindowNorms, find_flat_segment

DEFAULT_CAP = 2_000_000
DEFAULT_KAPPA = Fraction(8)
DEFAULT_MASS = Fraction(1, 8)
DEFAULT_THETA = Fraction(1, 64)


# --------------------------------------------------------------- energy
def mult_energy(ctx: GroupContext, B1, B2, cap: int = DEFAULT_CAP) -> int:
    """``#{(b1, b1', b2, b2') : b1 b2 = b1' b2'} = sum_g r(g)^2``."""
    B1, B2 = list(dict.fromkeys(B1)), list(dict.fromkeys(B2))
    if len(B1) * len(B2) > cap:
        raise ResourceError(f"|B1||B2| = {len(B1) * len(B2)} exceeds cap {cap}", {"pairs": len(B1) * len(B2)})
    mul = ctx.mul
    r = Counter(mul(a, b) for a in B1 for b in B2)
    return sum(v * v for v in r.values())


# ----------------------------------------------------------- truncation
@dataclass(frozen=True)
class TruncationParams:
    K: Fraction
    M: Fraction = None
    delta: Fraction = None

    def __post_init__(self):
        K = as_fraction(self.K)
        if K <= 0:
            raise DomainError("K must be positive")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "M", 10 * K)
        object.__setattr__(self, "delta", 1 / (100 * K * K))

    @classmethod
    def from_c(cls, c) -> TruncationParams:
        return cls(1 / as_fraction(c))


@dataclass(frozen=True)
class Truncation:
    params: TruncationParams
    heavy: Measure  # mu'
    light: Measure  # mu''
    middle: Measure  # mu~
    heavy_l1: Fraction
    light_l2sq: Fraction
    l2sq: Fraction

    @property
    def heavy_ok(self) -> bool:
        return self.heavy_l1 <= 1 / self.params.M

    @property
    def light_ok(self) -> bool:
        return self.light_l2sq <= self.params.delta * self.l2sq


def truncate_measure(mu: Measure, params: TruncationParams) -> Truncation:
    """Split ``mu`` into atoms ``>= M||mu||^2``, ``<= delta||mu||^2`` and the rest.

    The parts are returned unnormalised. Both bounds hold for every input; they
    are recomputed exactly from the parts rather than assumed.
    """
    l2 = norms(mu).l2sq
    hi, lo = params.M * l2, params.delta * l2
    heavy, light, mid = {}, {}, {}
    for g, w in mu.atoms.items():
        (heavy if w >= hi else light if w <= lo else mid)[g] = w
    mk = lambda d: Measure(mu.ctx, d, probability=False, validate=False)  # noqa: E731
    return Truncation(
        params, mk(heavy), mk(light), mk(mid),
        sum(heavy.values(), Fraction(0)), sum((w * w for w in light.values()), Fraction(0)), l2,
    )


# --------------------------------------------------------------- covers
@dataclass(frozen=True)
class CoverResult:
    X: tuple
    K: int
    ok: bool
    upper_bound: bool = True  # greedy size bounds the least cover from above


def approx_group_cover(ctx: GroupContext, A, Kmax: int, cap: int = DEFAULT_CAP) -> CoverResult:
    """Greedy cover of ``A A`` by left translates ``x A`` with symmetric ``X`` in ``A^3``.

    Each round takes the translate covering the most uncovered points; ties go
    to the identity, then to the translate meeting ``A A`` most, then to the
    canonically least ``x``.
    """
    A = frozenset(ctx.element(a) for a in A)
    ident = ctx.identity()
    bad = []
    if ident not in A:
        bad.append(("identity missing", ctx.encode(ident)))
    bad += [("inverse missing", ctx.encode(a)) for a in sorted(A) if ctx.inv(a) not in A]
    if bad:
        raise DomainError(f"A is not symmetric: {bad[:8]}")
    AA = product_set(ctx, A, A, cap)
    # id in A, so A A is inside A^3 and is the whole candidate set
    cands = sorted(AA)
    uncovered = set(AA)
    trans = {x: {ctx.mul(x, a) for a in A} for x in cands}
    overlap = {x: len(t & AA) for x, t in trans.items()}
    X: list = []
    while uncovered:
        x = min(cands, key=lambda x: (-len(trans[x] & uncovered), x != ident, -overlap[x], x))
        X.append(x)
        uncovered -= trans[x]
    Xs = list(dict.fromkeys(X + [ctx.inv(x) for x in X]))
    return CoverResult(tuple(Xs), len(Xs), len(Xs) <= Kmax)


# -------------------------------------------------------- <HP> membership
class SubgroupOracle:
    """Membership in ``<HP>``.

    Exact (closure) in finite groups. In infinite groups the test is
    ``g in HP_span``, a bounded stand-in flagged by ``exact = False``.
    """

    def __init__(self, hp: CosetNilprogression, span=8, cap: int = DEFAULT_CAP):
        ctx = hp.ctx
        self.hp = hp
        self.span = as_fraction(span)
        if ctx.is_finite:
            self.members = subgroup_closure(ctx, list(hp.P.generators) + list(hp.H), cap)
            self.exact = True
        else:
            self.members = enumerate_hp(hp, self.span, cap)
            self.exact = False

    def __contains__(self, g) -> bool:
        return g in self.members

    def same_coset(self, x, y) -> bool:
        """``x <HP> == y <HP>``."""
        ctx = self.hp.ctx
        return ctx.mul(ctx.inv(x), y) in self.members


# --------------------------------------------------- translate collections
@dataclass(frozen=True)
class TranslateCollection:
    hp: CosetNilprogression
    reps: tuple  # k_0 = id first
    delta_sq: Fraction
    pool_size: int
    maximal: bool
    covered: bool  # every eligible pool element lies in some k_i HP^2
    witness: object = None  # first eligible k breaking maximality or covering

    @property
    def N(self) -> int:
        return len(self.reps) - 1


def _hp_sets(hp: CosetNilprogression, cap: int):
    S = enumerate_hp(hp, 1, cap)
    return S, frozenset(product_set(hp.ctx, S, S, cap))


def maximal_disjoint_translates(
    mu: Measure,
    hp: CosetNilprogression,
    delta_sq,
    pool,
    start=None,
    metric: SemiMetric | None = None,
    cap: int = DEFAULT_CAP,
    _sets=None,
) -> TranslateCollection:
    """Greedy maximal family of pairwise disjoint ``k HP`` with ``d_mu(k, id)^2 <= delta_sq``.

    ``start`` (a list of representatives beginning with the identity) lets a
    collection at a smaller threshold be extended. ``k HP`` meets ``k' HP``
    exactly when ``k'^-1 k`` lies in ``HP (HP)^-1 = HP^2``.
    """
    ctx = mu.ctx
    delta_sq = as_fraction(delta_sq)
    metric = metric or SemiMetric(mu)
    _, S2 = _sets or _hp_sets(hp, cap)
    ident = ctx.identity()
    pool = sorted(set(ctx.element(k) for k in pool) | {ident})
    eligible = [k for k in pool if metric.sq_shift(k) <= delta_sq]
    reps = list(start) if start else [ident]
    if reps[0] != ident:
        raise DomainError("a collection starts at k_0 = id")
    for k in reps:
        if metric.sq_shift(k) > delta_sq:
            raise DomainError(f"starting representative {ctx.encode(k)} is above the threshold")
    inv = {k: ctx.inv(k) for k in reps}
    for k in eligible:
        if all(ctx.mul(inv[r], k) not in S2 for r in reps):
            reps.append(k)
            inv[k] = ctx.inv(k)
    # the maximality check and the covering consequence are the same membership
    # test read two ways; they are recomputed here over the full pool
    witness = next((k for k in eligible if all(ctx.mul(inv[r], k) not in S2 for r in reps)), None)
    return TranslateCollection(hp, tuple(reps), delta_sq, len(pool), witness is None, witness is None, witness)


def disjoint_translates_ok(coll: TranslateCollection, cap: int = DEFAULT_CAP) -> bool:
    """Independent pairwise check that the translates ``k_i HP`` are disjoint sets."""
    ctx = coll.hp.ctx
    S = enumerate_hp(coll.hp, 1, cap)
    seen: set = set()
    for k in coll.reps:
        t = {ctx.mul(k, s) for s in S}
        if seen & t:
            return False
        seen |= t
    return True


class StabilizationError(DomainError):
    def __init__(self, message, sizes):
        super().__init__(message)
        self.sizes = sizes


@dataclass(frozen=True)
class Stabilization:
    level: int
    thresholds_sq: tuple  # (delta0 / C0^j)^2, j = 0..lmax
    collections: tuple  # TranslateCollection per level j
    sizes: tuple

    @property
    def reps(self) -> tuple:
        return self.collections[self.level].reps


def stabilize_collections(
    mu: Measure,
    hp: CosetNilprogression,
    delta0,
    C0: int,
    lmax: int,
    pool,
    metric: SemiMetric | None = None,
    cap: int = DEFAULT_CAP,
) -> Stabilization:
    """Nested maximal collections at ``delta0 / C0^j`` and the least ``l`` where levels ``l-1`` and ``l+1`` agree.

    Built from the finest level ``lmax`` upwards, each collection extending the
    one below it, so the representative sets are nested.
    """
    if C0 < 2:
        raise DomainError("C0 must be at least 2")
    delta0 = as_fraction(delta0)
    if lmax < 2:
        raise StabilizationError(f"lmax = {lmax} leaves no level l with l-1 and l+1 in range", ())
    metric = metric or SemiMetric(mu)
    sets = _hp_sets(hp, cap)
    pool = list(pool)
    ths = tuple((delta0 / Fraction(C0) ** j) ** 2 for j in range(lmax + 1))
    colls: list = [None] * (lmax + 1)
    prev = None
    for j in range(lmax, -1, -1):
        colls[j] = maximal_disjoint_translates(mu, hp, ths[j], pool, prev, metric, cap, sets)
        prev = colls[j].reps
    sizes = tuple(len(c.reps) for c in colls)
    for l in range(1, lmax):
        if set(colls[l - 1].reps) == set(colls[l + 1].reps):
            return Stabilization(l, ths, tuple(colls), sizes)
    raise StabilizationError(f"collections did not stabilise by level {lmax}; sizes {sizes}", sizes)


# ------------------------------------------------------------ coset tree
@dataclass(frozen=True)
class CosetTree:
    cosets: tuple  # representative k_t per vertex, root first
    reps: tuple  # x_t per vertex
    edges: tuple  # (parent, child, weight_sq)
    dT_sq: tuple  # full matrix of d_T^2
    exact: bool  # coset membership was decided exactly
    path_ok: bool  # Claim (1): path edges <= d_T
    edge_ok: bool  # Claim (2): d_T = d(x_t, x_t') on tree edges
    factor_ok: bool  # Claim (3) with factor |T| both ways

    @property
    def X(self) -> tuple:
        return self.reps

    @property
    def valid(self) -> bool:
        return self.path_ok and self.edge_ok and self.factor_ok


def dedupe_cosets(reps, oracle: SubgroupOracle) -> list:
    out: list = []
    for k in reps:
        if not any(oracle.same_coset(t, k) for t in out):
            out.append(k)
    return out


def _coset_distance(ctx, metric, D, kt_new, xt, oracle):
    """``min d(g, id)^2`` over ``g`` with ``g x_t <HP> = k_t' <HP>``, with an argmin."""
    kinv = ctx.inv(kt_new)
    best, arg = Fraction(2), None
    for g in D:
        if ctx.mul(ctx.mul(kinv, g), xt) in oracle:
            v = metric.sq_shift(g)
            if arg is None or v < best or (v == best and g < arg):
                best, arg = v, g
    # d^2 <= 2 always, and 2 is attained off supp(mu)^-1 supp(mu): the fallback
    # g = k_t' x_t^-1 lies in the coset and is used when no overlap element does
    if arg is None:
        return Fraction(2), ctx.mul(kt_new, ctx.inv(xt))
    return best, arg


def build_coset_tree(cosets, mu: Measure, oracle: SubgroupOracle, metric: SemiMetric | None = None) -> CosetTree:
    """Prim's greedy tree on the cosets, root ``<HP>`` itself, with ``x_t' := g x_t`` on each edge."""
    ctx = mu.ctx
    metric = metric or SemiMetric(mu)
    cosets = list(cosets)
    if not cosets or not oracle.same_coset(cosets[0], ctx.identity()):
        raise DomainError("the first coset must be the root <HP>")
    n = len(cosets)
    S = mu.support
    D = sorted(product_set(ctx, [ctx.inv(s) for s in S], S))
    reps: list = [None] * n
    reps[0] = ctx.identity()
    in_tree = [0]
    edges = []
    while len(in_tree) < n:
        best = None
        for t in in_tree:
            for u in range(n):
                if reps[u] is not None:
                    continue
                w, g = _coset_distance(ctx, metric, D, cosets[u], reps[t], oracle)
                key = (w, t, u)
                if best is None or key < best[0]:
                    best = (key, g)
        (w, t, u), g = best
        reps[u] = ctx.mul(g, reps[t])
        in_tree.append(u)
        edges.append((t, u, w))
    dT = [[Fraction(0) if a == b else _coset_distance(ctx, metric, D, cosets[b], reps[a], oracle)[0] for b in range(n)] for a in range(n)]
    adj = {v: [] for v in range(n)}
    for a, b, w in edges:
        adj[a].append((b, w))
        adj[b].append((a, w))

    def path_max(a, b):
        stack = [(a, -1, Fraction(0))]
        while stack:
            v, parent, m = stack.pop()
            if v == b:
                return m
            stack += [(u, v, max(m, w)) for u, w in adj[v] if u != parent]
        raise DomainError("tree does not span the cosets")

    path_ok = all(path_max(a, b) <= dT[a][b] for a in range(n) for b in range(n) if a != b)
    edge_ok = all(metric.sq(reps[b], reps[a]) == w for a, b, w in edges)
    f2 = n * n
    factor_ok = all(
        dT[a][b] <= f2 * metric.sq(reps[a], reps[b]) and metric.sq(reps[a], reps[b]) <= f2 * dT[a][b]
        for a in range(n) for b in range(n) if a != b
    )
    return CosetTree(tuple(cosets), tuple(reps), tuple(edges), tuple(map(tuple, dT)), oracle.exact, path_ok, edge_ok, factor_ok)


# -------------------------------------------------------------- catalog
@dataclass(frozen=True)
class Candidate:
    label: str
    hp: CosetNilprogression


@dataclass(frozen=True)
class CandidateScore:
    index: int
    label: str
    size: int | None
    size_bound: Fraction
    mass_mu: Fraction
    mass_nu: Fraction
    x0: object
    y0: object
    passed: bool
    reason: str = ""


def _dyadic(limit: int) -> list:
    out, k = [], 1
    while k <= limit:
        out.append(k)
        k *= 2
    return out


def default_catalog(ctx: GroupContext, seeds, size_bound: int, max_gens: int = 12, cap: int = DEFAULT_CAP) -> list:
    """Cyclic progressions and subgroup closures from ``seeds``, plus axis boxes.

    ``seeds`` are group elements in priority order (differences of step atoms,
    then the atoms). Only
    candidates whose size could respect ``size_bound`` are produced.
    """
    ident = ctx.identity()
    gens: list = []
    for g in seeds:
        if g != ident and ctx.inv(g) not in gens and g not in gens:
            gens.append(min(g, ctx.inv(g)))
    gens = list(dict.fromkeys(gens))[:max_gens]
    trivial = Progression(ctx, (ident,), (1,))
    out = [Candidate("trivial", CosetNilprogression(trivial))]
    # subgroup closures of one or two generators (finite only)
    if ctx.is_finite or ctx.kind in ("integer-matrix", "rational-matrix-2"):
        seen: set = set()
        for a in range(len(gens)):
            for b in range(a, len(gens)):
                sub = [gens[a]] if a == b else [gens[a], gens[b]]
                try:
                    H = subgroup_closure(ctx, sub, size_bound)
                except ResourceError:
                    continue
                if H not in seen:
                    seen.add(H)
                    out.append(Candidate(f"closure({', '.join(ctx.encode(g) for g in sub)})", CosetNilprogression(trivial, H)))
    for g in gens:
        order = element_order(ctx, g, 2 * size_bound + 2)
        for N in _dyadic(max(size_bound // 2, 1)):
            out.append(Candidate(f"P({ctx.encode(g)}; {N})", CosetNilprogression(Progression(ctx, (g,), (N,)))))
            if order is not None and 2 * N + 1 >= order:
                break
    if ctx.kind == "lattice":
        d = ctx.param
        basis = [tuple(int(i == j) for j in range(d)) for i in range(d)]
        for N in _dyadic(size_bound):
            if (2 * N + 1) ** d > size_bound:
                break
            out.append(Candidate(f"box({N})", CosetNilprogression(Progression(ctx, basis, (N,) * d))))
    if ctx.kind == "heisenberg":
        u1, u2, z = (1, 0, 0), (0, 1, 0), (0, 0, 1)
        for N in _dyadic(size_bound):
            if (2 * N + 1) ** 2 * (2 * N * N + 1) > size_bound:
                break
            out.append(Candidate(f"box({N},{N},{N * N})", CosetNilprogression(Progression(ctx, (u1, u2, z), (N, N, N * N)))))
        for N in _dyadic(size_bound):
            if (2 * N + 1) ** 3 > size_bound:
                break
            out.append(Candidate(f"box({N},{N},{N})", CosetNilprogression(Progression(ctx, (u1, u2, z), (N, N, N)))))
    return out


def _best_translate(ctx, mu: Measure, S, left: bool):
    """``max_x mu(x S)`` (left) or ``max_y mu(S y)``, with the canonically least maximiser."""
    acc: dict = {}
    sinv = [ctx.inv(s) for s in S]
    for g, w in mu.atoms.items():
        for s in sinv:
            x = ctx.mul(g, s) if left else ctx.mul(s, g)
            acc[x] = acc.get(x, 0) + w
    top = max(acc.values())
    return top, min(x for x, v in acc.items() if v == top)


def score_candidate(index, cand: Candidate, mu: Measure, nu: Measure, size_bound: Fraction, mass: Fraction, cap: int) -> CandidateScore:
    """The contract: ``|HP| <= size_bound``, ``mu(x0 HP) >= mass`` and ``nu(HP y0) >= mass``."""
    ctx = mu.ctx
    try:
        S = enumerate_hp(cand.hp, 1, min(cap, int(size_bound) + 1))
    except ResourceError:
        return CandidateScore(index, cand.label, None, size_bound, Fraction(0), Fraction(0), None, None, False, "larger than the size bound")
    if len(S) > size_bound:
        return CandidateScore(index, cand.label, len(S), size_bound, Fraction(0), Fraction(0), None, None, False, "larger than the size bound")
    mm, x0 = _best_translate(ctx, mu, S, True)
    mn, y0 = _best_translate(ctx, nu, S, False)
    ok = mm >= mass and mn >= mass
    return CandidateScore(index, cand.label, len(S), size_bound, mm, mn, x0, y0, ok, "" if ok else "translate mass below threshold")


# --------------------------------------------------------------- report
@dataclass(frozen=True)
class PairRecord:
    i: int
    a: object
    a_prime: object
    lam: Fraction | None  # None: outside every dilate up to lam_max
    sigma: tuple  # (x, sigma(x)) pairs


@dataclass(frozen=True)
class StructureParams:
    c: Fraction = Fraction(1, 16)
    eps: Fraction = Fraction(1, 2)
    tau: Fraction | None = None
    c_halvings: int = 6
    kappa: Fraction = DEFAULT_KAPPA
    mass: Fraction = DEFAULT_MASS
    theta: Fraction = DEFAULT_THETA
    lam_max: Fraction = Fraction(2)
    delta0: Fraction = Fraction(1)
    C0: int = 2
    lmax: int = 8
    span: Fraction = Fraction(8)
    max_full: int = 16
    max_x: int = 16
    workers: int = 1
    cap: int = DEFAULT_CAP
    pool_cap: int = 20_000


@dataclass(frozen=True)
class StructureReport:
    segment: SegmentReport
    hp: CosetNilprogression
    label: str
    X: tuple
    cosets_exact: bool
    records: tuple
    max_lam: Fraction | None
    hp_size: int
    rho: Fraction | None
    energy: int | None
    energy_ok: bool | None
    scores: tuple
    atypical: tuple  # (m, atypical mass, threshold_sq)
    stabilization_level: int
    level_sizes: tuple
    tree: CosetTree
    pool_note: str
    pool_size: int
    tt_ok: bool  # d_T <= 2 * level threshold between stabilised representatives
    reverse_cover: tuple  # (checked, covered) for pool elements at the coarser level
    norm_vs_distance: tuple  # (element, d^2, lambda or None)
    params: StructureParams = field(repr=False, default=None)

    @property
    def hp_rho(self) -> Fraction | None:
        return None if self.rho is None else self.hp_size * self.rho

    def to_json(self) -> dict:
        from .rational import fraction_str as fs

        ctx = self.hp.ctx
        enc = ctx.encode
        opt = lambda q: None if q is None else fs(q)  # noqa: E731
        return {
            "segment": self.segment.to_json(),
            "hp": {
                "label": self.label,
                "generators": [enc(g) for g in self.hp.P.generators],
                "lengths": [fs(x) for x in self.hp.P.lengths],
                "H": sorted(enc(h) for h in self.hp.H),
                "size": self.hp_size,
            },
            "X": [enc(x) for x in self.X],
            "cosets_exact": self.cosets_exact,
            "records": [
                {"i": r.i, "a": enc(r.a), "a_prime": enc(r.a_prime), "lambda": opt(r.lam),
                 "sigma": [[enc(x), enc(y)] for x, y in r.sigma]}
                for r in self.records
            ],
            "summary": {
                "max_lambda": opt(self.max_lam), "rho": opt(self.rho), "hp_times_rho": opt(self.hp_rho),
                "energy": self.energy, "energy_ok": self.energy_ok,
                "atypical": [{"m": m, "mass": fs(v), "threshold_sq": fs(t)} for m, v, t in self.atypical],
                "stabilization_level": self.stabilization_level, "level_sizes": list(self.level_sizes),
                "tree_valid": self.tree.valid, "tt_ok": self.tt_ok,
                "reverse_cover": list(self.reverse_cover),
            },
            "scores": [
                {"index": s.index, "label": s.label, "size": s.size, "size_bound": fs(s.size_bound),
                 "mass_mu": fs(s.mass_mu), "mass_nu": fs(s.mass_nu), "passed": s.passed, "reason": s.reason}
                for s in self.scores
            ],
            "pool": {"note": self.pool_note, "size": self.pool_size},
            "norm_vs_distance": [[enc(g), fs(d), opt(l)] for g, d, l in self.norm_vs_distance],
        }


POOL_NOTE = (
    "translate candidates: supp(eta_m) supp(eta_m)^-1 for m <= bound, plus a a'^-1 for a, a' in each A_i, "
    "filtered by the d_mu threshold"
)


def _pool(ctx, walk: WalkSpec, memo: WindowNorms, j0: int, M: int, limit: int) -> list:
    out: set = set()
    for m in range(1, M + 1):
        S = memo.measure(j0 - m, j0 - 1).support
        Sinv = [ctx.inv(h) for h in S]
        out |= product_set(ctx, S, Sinv, limit * 4)
        A = walk.support(j0 - m)
        out |= {ctx.mul(a, ctx.inv(b)) for a in A for b in A}
        if len(out) > limit:
            break
    return sorted(out)[:limit] if len(out) > limit else sorted(out)


def _evaluate(hp, mu, walk, memo, seg, pool, metric, p: StructureParams):
    """Collections, tree, X and pair records for one candidate."""
    ctx = mu.ctx
    stab = stabilize_collections(mu, hp, p.delta0, p.C0, p.lmax, pool, metric, p.cap)
    oracle = SubgroupOracle(hp, p.span, p.cap)
    cosets = dedupe_cosets(stab.reps, oracle)
    if len(cosets) > p.max_x:
        raise StabilizationError(f"{len(cosets)} cosets exceed the limit {p.max_x}", stab.sizes)
    tree = build_coset_tree(cosets, mu, oracle, metric)
    X = tree.reps
    records = []
    for m in range(1, seg.m_bound + 1):
        i = seg.j0 - m
        A = walk.support(i)
        for a in A:
            for b in A:
                if a == b:
                    continue
                try:
                    xn = hp_x_norm(ctx.mul(a, ctx.inv(b)), hp, X, p.lam_max, p.cap, p.max_x)
                    records.append(PairRecord(i, a, b, xn.lam, tuple(xn.sigma.items())))
                except NormExceeded:
                    records.append(PairRecord(i, a, b, None, ()))
    lams = [r.lam for r in records]
    max_lam = None if any(v is None for v in lams) else max(lams, default=Fraction(0))
    return stab, oracle, tree, X, tuple(records), max_lam


def detect_structure(walk: WalkSpec, catalog=None, params: StructureParams | None = None, memo: WindowNorms | None = None) -> StructureReport:
    """Flat segment, candidate scoring, collections, coset tree and per-pair norms.

    ``catalog`` extends the default catalog with user candidates (``Candidate``
    or ``CosetNilprogression``). The result certifies the best candidate
    found; NoStructureFound is raised when nothing meets the score contract.
    """
    p = params or StructureParams()
    ctx = walk.ctx
    memo = memo or WindowNorms(walk, p.cap)
    try:
        seg = find_flat_segment(walk, p.c, p.eps, p.tau, p.cap, p.c_halvings, memo=memo)
    except NoFlatSegment as exc:
        raise NoStructureFound(f"no flat segment, so nothing to score: {exc}", []) from exc
    j0, ls = seg.j0, seg.l0star
    mu = memo.measure(j0, j0 + ls)
    nu = memo.measure(j0 - ls, j0 - 1)
    mu_sq, nu_sq = norms(mu).l2sq, norms(nu).l2sq
    size_bound = p.kappa / max(mu_sq, nu_sq)

    # energy gate on the truncated supports
    tp = TruncationParams.from_c(seg.c)
    B1 = truncate_measure(mu, tp).middle.support
    B2 = truncate_measure(nu, tp).middle.support
    try:
        energy = mult_energy(ctx, B1, B2, p.cap)
        energy_ok = energy >= p.theta * len(B1) ** 3
    except ResourceError:
        energy, energy_ok = None, None
    if energy_ok is False:
        raise NoStructureFound(f"energy {energy} below {p.theta}|B1|^3 = {p.theta * len(B1) ** 3}", [])

    # differences a a'^-1 come first so they survive the generator limit
    diffs: set = set()
    supps: set = set()
    for m in range(0, seg.m_bound + 1):
        A = walk.support(j0 - m)
        supps |= set(A)
        diffs |= {ctx.mul(a, ctx.inv(b)) for a in A for b in A}
    seeds = sorted(diffs) + sorted(supps - diffs)
    cands = default_catalog(ctx, seeds, int(size_bound), cap=p.cap)
    for extra in catalog or ():
        cands.append(extra if isinstance(extra, Candidate) else Candidate("user", extra))

    def score(ic):
        return score_candidate(ic[0], ic[1], mu, nu, size_bound, p.mass, p.cap)

    if p.workers > 1:
        with ThreadPoolExecutor(p.workers) as ex:
            scores = list(ex.map(score, enumerate(cands)))
    else:
        scores = [score(ic) for ic in enumerate(cands)]
    passing = sorted((s for s in scores if s.passed), key=lambda s: (s.size, s.index))
    if not passing:
        raise NoStructureFound("no catalog candidate meets the score contract", scores)

    metric = SemiMetric(mu)
    pool = _pool(ctx, walk, memo, j0, seg.m_bound, p.pool_cap)
    best = None
    for s in passing[: p.max_full]:
        hp = cands[s.index].hp
        try:
            ev = _evaluate(hp, mu, walk, memo, seg, pool, metric, p)
        except (StabilizationError, ResourceError):
            continue
        stab, oracle, tree, X, records, max_lam = ev
        fail = max_lam is None or max_lam > 1
        key = (fail, len(X) * s.size, len(X), s.index)
        if best is None or key < best[0]:
            best = (key, s, ev)
    if best is None:
        raise NoStructureFound("no passing candidate produced a stable collection", scores)
    _, s, (stab, oracle, tree, X, records, max_lam) = best
    hp = cands[s.index].hp

    # typical pairs per prefix length
    n = walk.n
    th = power_bounds(n, -seg.eps * (1 - seg.eps))[0]
    atypical = []
    for m in range(1, seg.m_bound + 1):
        eta = memo.measure(j0 - m, j0 - 1)
        atypical.append((m, typical_pairs(mu, eta, th, metric).atypical_mass, th))

    l = stab.level
    tt_bound = 4 * stab.thresholds_sq[l]
    tt_ok = all(v <= tt_bound for row in tree.dT_sq for v in row)
    # pool elements at the coarser level against the union of x HP^4
    coarse = stab.thresholds_sq[l - 1]
    S = enumerate_hp(hp, 1, p.cap)
    try:
        S2 = product_set(ctx, S, S, p.cap)
        S4 = product_set(ctx, S2, S2, p.cap)
    except ResourceError:
        S4 = None
    checked = covered = 0
    if S4 is not None:
        xinv = [ctx.inv(x) for x in X]
        for k in pool:
            if metric.sq_shift(k) <= coarse:
                checked += 1
                covered += any(ctx.mul(xi, k) in S4 for xi in xinv)
    nvd = []
    for k in pool:
        d = metric.sq_shift(k)
        if d <= coarse and len(nvd) < 64:
            try:
                lam = hp_x_norm(k, hp, X, p.lam_max, p.cap, p.max_x).lam
            except NormExceeded:
                lam = None
            nvd.append((k, d, lam))
    try:
        rho = rho_exact(walk, cap=p.cap).rho
    except ResourceError:
        rho = None
    return StructureReport(
        seg, hp, s.label, X, oracle.exact, records, max_lam, s.size, rho, energy, energy_ok,
        tuple(scores), tuple(atypical), l, stab.sizes, tree, POOL_NOTE, len(pool), tt_ok,
        (checked, covered), tuple(nvd), p,
    )


# ----------------------------------------------------------- verification
def _perm_order(sigma: dict) -> int:
    seen: set = set()
    order = 1
    for x in sigma:
        if x in seen:
            continue
        k, y = 0, x
        while y not in seen:
            seen.add(y)
            y = sigma[y]
            k += 1
        order = order * k // math.gcd(order, k)
    return order


def verify_conclusion(report: StructureReport, walk: WalkSpec) -> Verdict:
    """Re-check every record by membership in an independently enumerated ``HP_lambda``.

    Membership uses the word-search oracle (not the fast table). When
    ``lambda < 1 / max N_i`` the record forces ``(a a'^-1)^d in x H x^-1`` with
    ``d`` the order of ``sigma``; this is multiplied out and the order bound
    ``d |H|`` is compared with :func:`element_order`.
    """
    ctx = walk.ctx
    hp = report.hp
    X = list(report.X)
    Xset = set(X)
    oracle = SubgroupOracle(hp, report.params.span if report.params else 8)
    for a in range(len(X)):
        for b in range(a + 1, len(X)):
            if oracle.same_coset(X[a], X[b]):
                return Verdict(False, f"x = {ctx.encode(X[a])} and {ctx.encode(X[b])} share a coset")
    cache: dict = {}

    def hp_set(lam):
        if lam not in cache:
            P = word_search(hp.P, lam)
            cache[lam] = {ctx.mul(h, q) for h in hp.H for q in P}
        return cache[lam]

    Nmax = max(hp.P.lengths)
    H = hp.H
    for r in report.records:
        label = f"record i={r.i}, a={ctx.encode(r.a)}, a'={ctx.encode(r.a_prime)}"
        if not 1 <= r.i <= walk.n or r.a not in walk.support(r.i) or r.a_prime not in walk.support(r.i):
            return Verdict(False, f"{label}: a, a' not in A_i")
        if r.lam is None:
            return Verdict(False, f"{label}: no dilate up to the configured maximum")
        sigma = dict(r.sigma)
        if set(sigma) != Xset or set(sigma.values()) != Xset:
            return Verdict(False, f"{label}: sigma is not a permutation of X")
        g = ctx.mul(r.a, ctx.inv(r.a_prime))
        S = hp_set(r.lam)
        for x, y in sigma.items():
            if ctx.mul(ctx.mul(ctx.inv(x), g), y) not in S:
                return Verdict(False, f"{label}: a a'^-1 not in x HP_lambda sigma(x)^-1 at x={ctx.encode(x)}")
        if r.lam * Nmax < 1:
            d = _perm_order(sigma)
            gd = ctx.power(g, d)
            for x in X:
                if ctx.mul(ctx.mul(ctx.inv(x), gd), x) not in H:
                    return Verdict(False, f"{label}: (a a'^-1)^{d} not in x H x^-1 at x={ctx.encode(x)}")
            bound = d * len(H)
            o = element_order(ctx, g, bound)
            if o is None:
                return Verdict(False, f"{label}: order of a a'^-1 exceeds d|H| = {bound}")
    return Verdict(True)
