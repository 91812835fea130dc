"""Progressions, coset nilprogressions, normal-form certificates and HP-norms.

Occurrence budgets follow the symmetric convention: in ``P(u; N)`` every word
may use ``u_i`` at most ``floor(N_i)`` times *and* ``u_i^-1`` at most
``floor(N_i)`` times.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DomainError, NormExceeded, ResourceError
from .groups import GroupContext, product_set
from .rational import as_fraction

DEFAULT_CAP = 2_000_000
DEFAULT_LAMBDA_MAX = Fraction(2)
MAX_X = 16


def bracket_layers(ctx: GroupContext, leaves, degree: int) -> dict[int, set]:
    """All bracket patterns of each degree up to ``degree`` over ``leaves``."""
    layers = {1: set(leaves)}
    for d in range(2, degree + 1):
        out = set()
        for i in range(1, d):
            for a in layers[i]:
                for b in layers[d - i]:
                    out.add(ctx.commutator(a, b))
        layers[d] = out
    return layers


def nilpotency_witness(ctx: GroupContext, gens, step: int):
    """A non-trivial bracket of degree ``step + 1``, or None if they all vanish."""
    gens = list(gens)
    leaves = gens + [ctx.inv(g) for g in gens]
    top = bracket_layers(ctx, leaves, step + 1)[step + 1]
    e = ctx.identity()
    bad = sorted(x for x in top if x != e)
    return bad[0] if bad else None


@dataclass(frozen=True)
class Progression:
    ctx: GroupContext
    generators: tuple
    lengths: tuple
    step: int | None = None
    C: Fraction | None = None
    _central: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        ctx = self.ctx
        gens = tuple(ctx.element(g) for g in self.generators)
        lens = tuple(as_fraction(x) for x in self.lengths)
        if not gens:
            raise DomainError("a progression needs at least one generator")
        if len(gens) != len(lens):
            raise DomainError("one length per generator")
        if any(x <= 0 for x in lens):
            raise DomainError("lengths must be positive")
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "lengths", lens)
        if self.C is not None:
            object.__setattr__(self, "C", as_fraction(self.C))
        if self.step is not None:
            if self.step < 1:
                raise DomainError("step must be >= 1")
            w = nilpotency_witness(ctx, gens, self.step)
            if w is not None:
                raise DomainError(f"claimed step {self.step} but a degree-{self.step + 1} bracket is {ctx.encode(w)}")
        central = tuple(all(ctx.mul(g, h) == ctx.mul(h, g) for h in gens) for g in gens)
        object.__setattr__(self, "_central", central)

    @property
    def rank(self) -> int:
        return len(self.generators)

    @property
    def central(self) -> tuple:
        """Which generators commute with every generator (hence are central in <P>)."""
        return self._central

    def budgets(self, lam) -> tuple:
        lam = as_fraction(lam)
        return tuple(math.floor(lam * n) for n in self.lengths)

    def dilate(self, lam) -> Progression:
        lam = as_fraction(lam)
        if lam <= 0:
            raise DomainError("dilation factor must be positive")
        return Progression(self.ctx, self.generators, tuple(lam * n for n in self.lengths), self.step, self.C)

    def box_volume(self) -> int:
        return math.prod(2 * math.floor(n) + 1 for n in self.lengths)

    def word_element(self, word) -> object:
        """Product of a word given as signed 1-based generator indices."""
        ctx = self.ctx
        g = ctx.identity()
        for s in word:
            if s == 0 or abs(s) > self.rank:
                raise DomainError(f"letter {s} is not a generator index")
            u = self.generators[abs(s) - 1]
            g = ctx.mul(g, u if s > 0 else ctx.inv(u))
        return g

    def normal_form_element(self, exponents) -> object:
        ctx = self.ctx
        g = ctx.identity()
        for u, m in zip(self.generators, exponents):
            g = ctx.mul(g, ctx.power(u, m))
        return g


@dataclass(frozen=True)
class CosetNilprogression:
    P: Progression
    H: frozenset = None
    _tables: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        ctx = self.P.ctx
        H = frozenset([ctx.identity()]) if self.H is None else frozenset(ctx.element(h) for h in self.H)
        object.__setattr__(self, "H", H)
        if ctx.identity() not in H:
            raise DomainError("H must contain the identity")
        for a in H:
            if ctx.inv(a) not in H:
                raise DomainError(f"H is not closed under inverses: {ctx.encode(a)}")
            for b in H:
                if ctx.mul(a, b) not in H:
                    raise DomainError("H is not closed under products")
        for u in self.P.generators:
            if {ctx.mul(u, h) for h in H} != {ctx.mul(h, u) for h in H}:
                raise DomainError(f"generator {ctx.encode(u)} does not normalise H (uH != Hu)")

    @property
    def ctx(self) -> GroupContext:
        return self.P.ctx

    def table(self, lam_max=DEFAULT_LAMBDA_MAX, cap: int = DEFAULT_CAP) -> NormTable:
        lam_max = as_fraction(lam_max)
        key = (lam_max, cap)
        if key not in self._tables:
            self._tables[key] = NormTable(self, lam_max, cap)
        return self._tables[key]


# ------------------------------------------------------------------ enumeration
def _p_table(P: Progression, lam_max: Fraction, cap: int) -> dict:
    """Map every element of ``P_{lam_max}`` to the least dilate containing it.

    Central generators are pulled out: only their net exponent matters. The
    remaining generators are handled by a DP over exact occurrence counts
    ``(c_i^+, c_i^-)``, storing the set of words' values for each count vector.
    """
    ctx = P.ctx
    b = P.budgets(lam_max)
    nc = [i for i in range(P.rank) if not P.central[i] and b[i] > 0]
    cen = [i for i in range(P.rank) if P.central[i] and b[i] > 0]
    letters = []
    for i in nc:
        u = P.generators[i]
        letters += [(u, i), (ctx.inv(u), i)]
    slot_budget = [b[i] for _, i in letters]
    lens = P.lengths
    e = ctx.identity()

    def lam_of(cv):
        best = Fraction(0)
        for t in range(0, len(cv), 2):
            i = letters[t][1]
            k = max(cv[t], cv[t + 1])
            if k:
                best = max(best, Fraction(k, 1) / lens[i])
        return best

    walls: dict = {e: Fraction(0)}
    layer = {tuple([0] * len(letters)): {e}}
    total = sum(slot_budget)
    for _depth in range(1, total + 1):
        nxt: dict = {}
        for cv, elems in layer.items():
            for t, (s, _) in enumerate(letters):
                if cv[t] >= slot_budget[t]:
                    continue
                cv2 = cv[:t] + (cv[t] + 1,) + cv[t + 1 :]
                bucket = nxt.setdefault(cv2, set())
                for x in elems:
                    bucket.add(ctx.mul(x, s))
        for cv, elems in nxt.items():
            lam = lam_of(cv)
            for x in elems:
                old = walls.get(x)
                if old is None or lam < old:
                    walls[x] = lam
        if len(walls) > cap:
            raise ResourceError(f"progression enumeration exceeded cap {cap}", {"count": len(walls)})
        layer = nxt
    if not cen:
        return walls
    central: dict = {}
    ranges = [range(-b[i], b[i] + 1) for i in cen]
    for t in itertools.product(*ranges):
        z = e
        lam = Fraction(0)
        for i, k in zip(cen, t):
            z = ctx.mul(z, ctx.power(P.generators[i], k))
            if k:
                lam = max(lam, Fraction(abs(k), 1) / lens[i])
        if z not in central or lam < central[z]:
            central[z] = lam
    out: dict = {}
    for w, lw in walls.items():
        for z, lz in central.items():
            g = ctx.mul(w, z)
            lam = max(lw, lz)
            old = out.get(g)
            if old is None or lam < old:
                out[g] = lam
        if len(out) > cap:
            raise ResourceError(f"progression enumeration exceeded cap {cap}", {"count": len(out)})
    return out


class NormTable:
    """Least dilate ``lambda`` with ``g in HP_lambda`` for every ``g`` in ``HP_{lam_max}``."""

    def __init__(self, hp: CosetNilprogression, lam_max=DEFAULT_LAMBDA_MAX, cap: int = DEFAULT_CAP):
        self.hp = hp
        self.lam_max = as_fraction(lam_max)
        ptab = _p_table(hp.P, self.lam_max, cap)
        if len(hp.H) == 1:
            self._t = ptab
        else:
            ctx = hp.ctx
            t: dict = {}
            for p, lam in ptab.items():
                for h in hp.H:
                    g = ctx.mul(h, p)
                    if g not in t or lam < t[g]:
                        t[g] = lam
                if len(t) > cap:
                    raise ResourceError(f"HP enumeration exceeded cap {cap}", {"count": len(t)})
            self._t = t

    def norm(self, g):
        """Least dilate, or None if ``g`` is outside ``HP_{lam_max}``."""
        return self._t.get(g)

    def members(self, lam=1) -> frozenset:
        lam = as_fraction(lam)
        if lam > self.lam_max:
            raise DomainError(f"table only covers dilates up to {self.lam_max}")
        return frozenset(g for g, v in self._t.items() if v <= lam)

    def __len__(self):
        return len(self._t)


def enumerate_hp(hp: CosetNilprogression, lam=1, cap: int = DEFAULT_CAP) -> frozenset:
    """The exact element set of ``HP_lambda``."""
    lam = as_fraction(lam)
    if lam < 0:
        raise DomainError("dilate must be >= 0")
    return hp.table(lam, cap).members(lam)


def word_search(P: Progression, lam=1, cap: int = DEFAULT_CAP) -> set:
    """Independent oracle for ``P_lambda``: search over (element, usage) states.

    No generator is treated specially, so this also cross-checks the central
    factoring done by the fast enumeration.
    """
    ctx = P.ctx
    b = P.budgets(lam)
    letters = []
    for i, u in enumerate(P.generators):
        letters += [(u, 2 * i), (ctx.inv(u), 2 * i + 1)]
    start = (ctx.identity(), (0,) * (2 * P.rank))
    seen = {start}
    stack = [start]
    out = {ctx.identity()}
    while stack:
        g, used = stack.pop()
        for u, slot in letters:
            if used[slot] >= b[slot // 2]:
                continue
            state = (ctx.mul(g, u), used[:slot] + (used[slot] + 1,) + used[slot + 1 :])
            if state not in seen:
                seen.add(state)
                stack.append(state)
                out.add(state[0])
                if len(seen) > cap:
                    raise ResourceError(f"word search exceeded cap {cap}", {"states": len(seen)})
    return out


def _grid(P: Progression, lam_max: Fraction) -> list:
    pts = {Fraction(0)}
    for n in P.lengths:
        for k in range(1, math.floor(lam_max * n) + 1):
            pts.add(Fraction(k, 1) / n)
    return sorted(pts)


def hp_norm(g, hp: CosetNilprogression, lam_max=DEFAULT_LAMBDA_MAX, cap: int = DEFAULT_CAP) -> Fraction:
    """``inf{lambda : g in HP_lambda}``; the infimum is attained on the grid ``k / N_i``."""
    v = hp.table(lam_max, cap).norm(hp.ctx.element(g))
    if v is None:
        raise NormExceeded(f"{hp.ctx.encode(g)} is not in HP_lambda for lambda <= {lam_max}", as_fraction(lam_max))
    return v


def hp_norm_search(g, hp: CosetNilprogression, lam_max=DEFAULT_LAMBDA_MAX, cap: int = DEFAULT_CAP) -> Fraction:
    """Same value as :func:`hp_norm`, by bisection over the grid with word-search membership."""
    ctx = hp.ctx
    g = ctx.element(g)
    grid = _grid(hp.P, as_fraction(lam_max))
    hinv = [ctx.inv(h) for h in hp.H]

    def member(lam):
        S = word_search(hp.P, lam, cap)
        return any(ctx.mul(h, g) in S for h in hinv)

    if not member(grid[-1]):
        raise NormExceeded(f"{ctx.encode(g)} is not in HP_lambda for lambda <= {lam_max}", as_fraction(lam_max))
    lo, hi = 0, len(grid) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if member(grid[mid]):
            hi = mid
        else:
            lo = mid + 1
    return grid[lo]


@dataclass(frozen=True)
class XNorm:
    lam: Fraction
    sigma: dict  # x -> sigma(x)


def _perfect_matching(adj: list[list[int]], n: int):
    match_r = [-1] * n

    def augment(u, seen):
        for v in adj[u]:
            if v in seen:
                continue
            seen.add(v)
            if match_r[v] < 0 or augment(match_r[v], seen):
                match_r[v] = u
                return True
        return False

    for u in range(n):
        if not augment(u, set()):
            return None
    out = [0] * n
    for v, u in enumerate(match_r):
        out[u] = v
    return out


def hp_x_norm(g, hp: CosetNilprogression, X, lam_max=DEFAULT_LAMBDA_MAX, cap: int = DEFAULT_CAP, max_x: int = MAX_X) -> XNorm:
    """Least ``lambda`` with a permutation ``sigma`` of ``X`` and ``g in x HP_lambda sigma(x)^-1`` for all x.

    Solved as a bottleneck perfect matching on the ``|X| x |X|`` table of
    ``hp_norm(x^-1 g x')``.
    """
    ctx = hp.ctx
    g = ctx.element(g)
    X = list(dict.fromkeys(ctx.element(x) for x in X))
    if not X:
        raise DomainError("X must be non-empty")
    if len(X) > max_x:
        raise DomainError(f"|X| = {len(X)} exceeds the limit {max_x}")
    table = hp.table(lam_max, cap)
    n = len(X)
    cost = [[table.norm(ctx.mul(ctx.mul(ctx.inv(x), g), y)) for y in X] for x in X]
    levels = sorted({v for row in cost for v in row if v is not None})
    lo, hi = 0, len(levels) - 1
    best = None
    while lo <= hi:
        mid = (lo + hi) // 2
        lam = levels[mid]
        adj = [[j for j in range(n) if cost[i][j] is not None and cost[i][j] <= lam] for i in range(n)]
        m = _perfect_matching(adj, n)
        if m is not None:
            best = (lam, m)
            hi = mid - 1
        else:
            lo = mid + 1
    if best is None:
        raise NormExceeded(f"no matching for lambda <= {lam_max}", as_fraction(lam_max))
    lam, m = best
    return XNorm(lam, {X[i]: X[m[i]] for i in range(n)})


# ------------------------------------------------------------- normal forms
@dataclass(frozen=True)
class NormalFormCert:
    C: Fraction
    upper_triangular: bool
    local_proper: bool
    volume: bool
    witnesses: dict
    size: int
    box: int

    @property
    def valid(self) -> bool:
        return self.upper_triangular and self.local_proper and self.volume


def _commutator_containment(P: Progression, scale):
    """First (i, j, signs, commutator) with the commutator outside its tail, else None.

    ``scale(i, j, k)`` gives the allowed length of ``u_k`` in the tail.
    """
    ctx = P.ctx
    e = ctx.identity()
    r = P.rank
    for i in range(r):
        for j in range(i + 1, r):
            tail = list(range(j + 1, r))
            allowed = None
            if tail:
                lens = [scale(i, j, k) for k in tail]
                if all(x > 0 for x in lens):
                    sub = Progression(ctx, [P.generators[k] for k in tail], lens)
                    allowed = set(_p_table(sub, Fraction(1), DEFAULT_CAP))
            for si, sj in itertools.product((1, -1), repeat=2):
                c = ctx.commutator(ctx.power(P.generators[i], si), ctx.power(P.generators[j], sj))
                ok = c == e if allowed is None else c in allowed
                if not ok:
                    return {"i": i + 1, "j": j + 1, "signs": (si, sj), "commutator": ctx.encode(c)}
    return None


def _distinct_box(P: Progression, radii):
    """First colliding pair of exponent vectors for ``u_1^n1 ... u_r^nr``, else None."""
    ctx = P.ctx
    powers = []
    for u, R in zip(P.generators, radii):
        powers.append([(k, ctx.power(u, k)) for k in range(-R, R + 1)])
    seen: dict = {}
    for combo in itertools.product(*powers):
        g = ctx.identity()
        for _, x in combo:
            g = ctx.mul(g, x)
        vec = tuple(k for k, _ in combo)
        if g in seen:
            return {"exponents": (seen[g], vec), "element": ctx.encode(g)}
        seen[g] = vec
    return None


def verify_c_normal_form(P: Progression, C, cap: int = DEFAULT_CAP) -> NormalFormCert:
    """Check the three C-normal-form axioms exactly, with a witness for each failure."""
    C = as_fraction(C)
    if C <= 0:
        raise DomainError("C must be positive")
    witnesses = {}
    tri = _commutator_containment(P, lambda i, j, k: C * P.lengths[k] / (P.lengths[i] * P.lengths[j]))
    if tri:
        witnesses["upper_triangular"] = tri
    prop = _distinct_box(P, [math.floor(n / C) for n in P.lengths])
    if prop:
        witnesses["local_proper"] = prop
    size = len(_p_table(P, Fraction(1), cap))
    box = P.box_volume()
    vol = Fraction(box) / C <= size <= C * box
    if not vol:
        witnesses["volume"] = {"size": size, "box": box}
    return NormalFormCert(C, tri is None, prop is None, vol, witnesses, size, box)


# ------------------------------------------------------------- collecting
@dataclass(frozen=True)
class CollectResult:
    supported: bool
    exponents: tuple | None
    element: object
    word_counts: tuple  # (n_i, n_i') per generator
    inserted: tuple  # (plus, minus) letters created by commutator corrections
    drift: tuple
    drift_bound: tuple
    within_bound: bool
    overflow: tuple  # generators whose collected exponent exceeds their budget
    exact: bool


class _Collector:
    """Step-2 collecting with precomputed tail words for ``[u_k, u_i]``, ``k > i``."""

    def __init__(self, P: Progression, search_radius: int = 16):
        ctx = P.ctx
        self.P = P
        gens = P.generators
        e = ctx.identity()
        self.ok = True
        comms = {}
        for i in range(P.rank):
            for k in range(i + 1, P.rank):
                c = ctx.commutator(gens[k], gens[i])
                if any(ctx.mul(c, u) != ctx.mul(u, c) for u in gens):
                    self.ok = False  # not step 2: corrections would not be central
                    return
                comms[(k, i)] = c
        self.tail = {}
        for (k, i), c in comms.items():
            if c == e:
                continue
            expr = self._express(c, list(range(k + 1, P.rank)), search_radius)
            if expr is None:
                self.ok = False
                return
            self.tail[(k, i)] = expr

    def _express(self, c, idx, radius):
        ctx = self.P.ctx
        if not idx:
            return None
        gens = [self.P.generators[k] for k in idx]
        for R in range(1, radius + 1):
            for vec in itertools.product(range(-R, R + 1), repeat=len(idx)):
                if max(abs(v) for v in vec) != R:
                    continue
                g = ctx.identity()
                for u, v in zip(gens, vec):
                    g = ctx.mul(g, ctx.power(u, v))
                if g == c:
                    return tuple((k, v) for k, v in zip(idx, vec) if v)
        return None

    def run(self, word):
        r = self.P.rank
        m = [0] * r
        ins = [[0, 0] for _ in range(r)]

        def append(i, f, inserted):
            if f == 0:
                return
            fixes = [(k, m[k] * f) for k in range(r - 1, i, -1) if m[k] and (k, i) in self.tail]
            m[i] += f
            if inserted:
                ins[i][0 if f > 0 else 1] += abs(f)
            for k, e in fixes:
                expr = self.tail[(k, i)]
                if len(expr) == 1:
                    idx, t = expr[0]
                    append(idx, t * e, True)
                    continue
                block = expr if e > 0 else tuple((idx, -t) for idx, t in reversed(expr))
                for _ in range(abs(e)):
                    for idx, t in block:
                        append(idx, t, True)

        for s in word:
            append(abs(s) - 1, 1 if s > 0 else -1, False)
        return tuple(m), tuple(tuple(x) for x in ins)


def collect(word, P: Progression, D=100) -> CollectResult:
    """Sort a word into ``u_1^m1 ... u_r^mr`` and measure how far the exponents drift.

    The drift for ``u_i`` is ``max(|m_i - n_i|, |m_i' - n_i'|)`` where ``n_i, n_i'``
    count ``u_i, u_i^-1`` in the input and ``m_i, m_i'`` also count the letters
    introduced by commutator corrections. It is compared with ``N_i / D``.
    """
    D = as_fraction(D)
    word = list(word)
    target = P.word_element(word)
    counts = [[0, 0] for _ in range(P.rank)]
    for s in word:
        counts[abs(s) - 1][0 if s > 0 else 1] += 1
    counts = tuple(tuple(c) for c in counts)
    bound = tuple(n / D for n in P.lengths)
    col = getattr(P, "_collector", None)
    if col is None:
        col = _Collector(P)
        object.__setattr__(P, "_collector", col)
    if not col.ok:
        return CollectResult(False, None, target, counts, (), (), bound, False, (), False)
    exps, ins = col.run(word)
    drift = tuple(max(p, q) for p, q in ins)
    within = all(d <= b for d, b in zip(drift, bound))
    overflow = tuple(i + 1 for i, (x, n) in enumerate(zip(exps, P.lengths)) if abs(x) > n)
    exact = P.normal_form_element(exps) == target
    return CollectResult(True, exps, target, counts, ins, drift, bound, within, overflow, exact)


def random_box_word(P: Progression, rng: random.Random, budgets=None) -> list:
    """A random word respecting the occurrence budgets of ``P`` (or ``budgets``)."""
    b = budgets or P.budgets(1)
    pool = []
    for i, k in enumerate(b):
        pool += [i + 1] * rng.randint(0, k) + [-(i + 1)] * rng.randint(0, k)
    rng.shuffle(pool)
    return pool


# ------------------------------------------------------------------ shrinking
@dataclass(frozen=True)
class ShrinkResult:
    Q: Progression
    triangular: bool
    proper: bool
    ratio: Fraction
    ratio_bound: Fraction
    witnesses: dict

    @property
    def comparable(self) -> bool:
        return self.ratio <= self.ratio_bound

    @property
    def valid(self) -> bool:
        return self.triangular and self.proper and self.comparable


def shrink(P: Progression, C, D, H=None, ratio_bound=None, cap: int = DEFAULT_CAP) -> ShrinkResult:
    """``Q = P_{1/CD^2}`` with properties (i)-(iii) re-checked on Q.

    (i) ``[u_i^+-1, u_j^+-1] in P(u_{j+1}, ...; M_k / (D^2 M_i M_j))``;
    (ii) ``u_1^k1 ... u_r^kr`` distinct for ``|k_i| <= D M_i``;
    (iii) ``|HP| / |HQ|`` at most ``ratio_bound`` (default ``C^2`` times the box ratio,
    which is what the volume axiom at constant C gives for both P and Q).
    """
    C, D = as_fraction(C), as_fraction(D)
    if C < 1 or D < 1:
        raise DomainError("shrink needs C, D >= 1")
    Q = P.dilate(1 / (C * D * D))
    M = Q.lengths
    witnesses = {}
    tri = _commutator_containment(Q, lambda i, j, k: M[k] / (D * D * M[i] * M[j]))
    if tri:
        witnesses["triangular"] = tri
    prop = _distinct_box(Q, [math.floor(D * x) for x in M])
    if prop:
        witnesses["proper"] = prop
    hp = CosetNilprogression(P, H)
    hq = CosetNilprogression(Q, H)
    big = len(enumerate_hp(hp, 1, cap))
    small = len(enumerate_hp(hq, 1, cap))
    ratio = Fraction(big, small)
    if ratio_bound is None:
        ratio_bound = C * C * Fraction(P.box_volume(), Q.box_volume())
    ratio_bound = as_fraction(ratio_bound)
    if ratio > ratio_bound:
        witnesses["comparable"] = {"HP": big, "HQ": small}
    return ShrinkResult(Q, tri is None, prop is None, ratio, ratio_bound, witnesses)


@dataclass(frozen=True)
class SqrtReport:
    lam: Fraction
    checked: int
    violations: tuple  # (x, norm of x)
    exhaustive: bool

    @property
    def ok(self) -> bool:
        return not self.violations


def square_root_check(hq: CosetNilprogression, D, samples: int | None = None, seed: int = 0, cap: int = DEFAULT_CAP) -> SqrtReport:
    """Every ``x`` with ``x, x^2 in HQ`` should lie in ``HQ_lambda``, ``lambda = (1 + 1/D)/2``."""
    D = as_fraction(D)
    lam = (1 + 1 / D) / 2
    table = hq.table(1, cap)
    elems = sorted(table.members(1))
    exhaustive = samples is None or samples >= len(elems)
    if not exhaustive:
        elems = random.Random(seed).sample(elems, samples)
    ctx = hq.ctx
    bad = []
    checked = 0
    for x in elems:
        if table.norm(ctx.mul(x, x)) is None:
            continue
        checked += 1
        v = table.norm(x)
        if v > lam:
            bad.append((x, v))
    return SqrtReport(lam, checked, tuple(bad), exhaustive)


# ------------------------------------------------------------------- growth
@dataclass(frozen=True)
class GrowthProfile:
    sizes: tuple
    slope: float | None
    r2: float | None
    semilog_r2: float | None
    ratios: tuple
    partial: bool
    exponential: bool


def _fit(x, y):
    if len(x) < 2:
        return None, None
    coef = np.polyfit(x, y, 1)
    pred = np.polyval(coef, x)
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    return float(coef[0]), (1.0 - ss_res / ss_tot) if ss_tot > 0 else 1.0


def fit_growth(sizes) -> tuple:
    """(log-log slope, its R^2, R^2 of the log-linear fit) for sizes indexed from k = 1."""
    k = np.arange(1, len(sizes) + 1, dtype=float)
    y = np.log(np.asarray(sizes, dtype=float))
    slope, r2 = _fit(np.log(k), y)
    _, r2_semi = _fit(k, y)
    return slope, r2, r2_semi


def growth_profile(hp: CosetNilprogression, nmax: int, cap: int = DEFAULT_CAP) -> GrowthProfile:
    """Exact ``|HP^k|`` for ``k = 1..nmax`` with a log-log slope fit.

    ``exponential`` is raised when a log-linear fit explains the sizes better
    than a power law. On hitting the cap the profile so far is returned with
    ``partial`` set.
    """
    if nmax < 1:
        raise DomainError("nmax must be >= 1")
    A = set(enumerate_hp(hp, 1, cap))
    base = len(hp.H) * len(_p_table(hp.P, Fraction(1), cap))
    sizes = [len(A)]
    cur = A
    partial = False
    for _ in range(2, nmax + 1):
        try:
            cur = product_set(hp.ctx, cur, A, cap)
        except ResourceError:
            partial = True
            break
        sizes.append(len(cur))
    slope, r2, r2_semi = fit_growth(sizes)
    expo = r2_semi is not None and len(sizes) >= 3 and r2_semi > r2
    return GrowthProfile(tuple(sizes), slope, r2, r2_semi, tuple(Fraction(s, base) for s in sizes), partial, expo)
