"""Finitely supported exact measures on a group, convolution, norms and d_mu.

Weights are stored as integer numerators over one shared denominator, which keeps
long convolution chains out of per-atom gcd work; ``Measure.atoms`` exposes the
reduced Fractions.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError, ResourceError
from .groups import Element, GroupContext
from .rational import sqrt_float

DEFAULT_SUPPORT_CAP = 10**6


class Measure:
    """Finitely supported measure with positive rational weights.

    Probability measures (the default) must have total mass exactly 1; pass
    ``probability=False`` for the sub-probability pieces produced by truncation.
    """

    __slots__ = ("ctx", "_num", "_den", "__dict__")

    def __init__(self, ctx: GroupContext, atoms: Mapping, *, probability: bool = True, validate: bool = True):
        fr = {}
        for g, w in atoms.items():
            w = Fraction(w)
            if w < 0:
                raise DomainError(f"negative weight {w} at {g!r}")
            if w == 0:
                continue
            g = ctx.element(g) if validate else g
            fr[g] = fr.get(g, Fraction(0)) + w
        den = math.lcm(*(w.denominator for w in fr.values())) if fr else 1
        num = {g: w.numerator * (den // w.denominator) for g, w in fr.items()}
        self.ctx = ctx
        self._num, self._den = _reduce(num, den)
        if probability and self.total != 1:
            raise DomainError(f"weights sum to {self.total}, not 1")

    @classmethod
    def _raw(cls, ctx: GroupContext, num: dict, den: int) -> "Measure":
        obj = cls.__new__(cls)
        obj.ctx = ctx
        obj._num, obj._den = _reduce({g: w for g, w in num.items() if w}, den)
        return obj

    @classmethod
    def delta(cls, ctx: GroupContext, g) -> "Measure":
        return cls._raw(ctx, {ctx.element(g): 1}, 1)

    @classmethod
    def uniform(cls, ctx: GroupContext, elems: Iterable) -> "Measure":
        elems = list(dict.fromkeys(ctx.element(g) for g in elems))
        if not elems:
            raise DomainError("uniform measure needs a nonempty support")
        return cls._raw(ctx, {g: 1 for g in elems}, len(elems))

    # ----------------------------------------------------------------- access
    @cached_property
    def atoms(self) -> dict:
        return {g: Fraction(w, self._den) for g, w in self._num.items()}

    def weight(self, g) -> Fraction:
        return Fraction(self._num.get(g, 0), self._den)

    @property
    def support(self) -> list:
        return sorted(self._num)

    @property
    def total(self) -> Fraction:
        return Fraction(sum(self._num.values()), self._den)

    def __len__(self):
        return len(self._num)

    def __eq__(self, other):
        return isinstance(other, Measure) and self.ctx == other.ctx and self._den == other._den and self._num == other._num

    def __hash__(self):
        return hash((self.ctx, self._den, frozenset(self._num.items())))

    def __repr__(self):
        items = ", ".join(f"{self.ctx.encode(g)}: {w}" for g, w in sorted(self.atoms.items())[:6])
        more = ", ..." if len(self) > 6 else ""
        return f"Measure({self.ctx}, {{{items}{more}}})"

    def pushforward(self, f) -> "Measure":
        num: dict = defaultdict(int)
        for g, w in self._num.items():
            num[f(g)] += w
        return Measure._raw(self.ctx, dict(num), self._den)

    def mass(self, elems: Iterable) -> Fraction:
        return Fraction(sum(self._num.get(g, 0) for g in set(elems)), self._den)

    def to_json(self) -> dict:
        from .rational import fraction_str

        return {"atoms": [{"elem": self.ctx.encode(g), "w": fraction_str(w)} for g, w in sorted(self.atoms.items())]}


def _reduce(num: dict, den: int) -> tuple[dict, int]:
    if not num:
        return {}, 1
    g = math.gcd(den, *num.values())
    if g > 1:
        num = {k: v // g for k, v in num.items()}
        den //= g
    return num, den


@dataclass(frozen=True)
class NormTriple:
    l1: Fraction
    l2sq: Fraction
    linf: Fraction

    @property
    def l2(self) -> float:
        return sqrt_float(self.l2sq)


def norms(mu: Measure) -> NormTriple:
    d = mu._den
    vals = mu._num.values()
    return NormTriple(
        Fraction(sum(vals), d),
        Fraction(sum(v * v for v in vals), d * d),
        Fraction(max(vals, default=0), d),
    )


def convolve(mu: Measure, nu: Measure, cap: int = DEFAULT_SUPPORT_CAP, cache: dict | None = None) -> Measure:
    """``(mu * nu)(g) = sum_h mu(h) nu(h^-1 g)``: the law of ``x*y`` for x~mu, y~nu.

    ``cache`` optionally memoises products ``(a, b) -> a*b`` across calls.
    """
    if mu.ctx != nu.ctx:
        raise DomainError(f"cannot convolve measures on {mu.ctx} and {nu.ctx}")
    mul = mu.ctx.mul
    num: dict = defaultdict(int)
    nu_items = list(nu._num.items())
    for a, wa in mu._num.items():
        for b, wb in nu_items:
            if cache is None:
                g = mul(a, b)
            else:
                g = cache.get((a, b))
                if g is None:
                    g = cache[(a, b)] = mul(a, b)
            num[g] += wa * wb
        if len(num) > cap:
            raise ResourceError(
                f"convolution support exceeded cap {cap}",
                {"support_so_far": len(num), "left_support": len(mu), "right_support": len(nu)},
            )
    return Measure._raw(mu.ctx, dict(num), mu._den * nu._den)


# --------------------------------------------------------------------- walks
@dataclass(frozen=True)
class WalkSpec:
    """Ordered steps ``mu_1, ..., mu_n`` (1-based in the API) with floor ``p0``."""

    ctx: GroupContext
    steps: tuple
    p0: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "p0", Fraction(self.p0))
        for i, s in enumerate(self.steps, 1):
            if s.ctx != self.ctx:
                raise DomainError(f"step {i} lives on {s.ctx}, walk on {self.ctx}")
            if s.total != 1:
                raise DomainError(f"step {i} is not a probability measure")

    @property
    def n(self) -> int:
        return len(self.steps)

    def step(self, i: int) -> Measure:
        if not 1 <= i <= self.n:
            raise DomainError(f"step index {i} outside 1..{self.n}")
        return self.steps[i - 1]

    def support(self, i: int) -> list:
        return self.step(i).support


def validate_p0(walk: WalkSpec) -> tuple[bool, list]:
    """True iff every atom weight exceeds ``p0``; offenders as (step, element, weight)."""
    bad = [
        (i, g, w)
        for i, s in enumerate(walk.steps, 1)
        for g, w in sorted(s.atoms.items())
        if not w > walk.p0
    ]
    return not bad, bad


def interval_measure(
    walk: WalkSpec,
    i: int,
    j: int,
    cap: int = DEFAULT_SUPPORT_CAP,
    reverse: bool = False,
    cache: dict | None = None,
) -> Measure:
    """``mu_[i,j] = mu_j * ... * mu_i`` (or ``mu_i * ... * mu_j`` with ``reverse``)."""
    if not (1 <= i <= j <= walk.n):
        raise DomainError(f"interval [{i},{j}] outside 1..{walk.n}")
    cache = {} if cache is None else cache
    order = range(i, j + 1) if reverse else range(j, i - 1, -1)
    acc = None
    for k in order:
        acc = walk.step(k) if acc is None else convolve(acc, walk.step(k), cap, cache)
    return acc


@dataclass(frozen=True)
class RhoResult:
    rho: Fraction
    argmax: Element
    support_size: int
    l2sq: Fraction


def rho_exact(
    walk: WalkSpec,
    interval: tuple[int, int] | None = None,
    cap: int = DEFAULT_SUPPORT_CAP,
    reverse: bool = False,
) -> RhoResult:
    """Exact concentration probability ``max_g mu_[i,j](g)`` with an argmax."""
    i, j = interval or (1, walk.n)
    try:
        mu = interval_measure(walk, i, j, cap, reverse)
    except ResourceError as exc:
        raise ResourceError(f"{exc}; use rho_monte_carlo for walks this large", exc.partial) from exc
    return _rho_of(mu)


def _rho_of(mu: Measure) -> RhoResult:
    best = max(mu._num.values())
    argmax = min(g for g, w in mu._num.items() if w == best)
    return RhoResult(Fraction(best, mu._den), argmax, len(mu), norms(mu).l2sq)


# ---------------------------------------------------------------- sampling
@dataclass(frozen=True)
class MonteCarloEstimate:
    collision: float
    max_bin: float
    trials: int
    distinct: int


def sample_products(walk: WalkSpec, trials: int, seed: int) -> list:
    """Independent samples of ``g_n ... g_1``; deterministic given ``seed``."""
    rng = np.random.default_rng(seed)
    picks = []
    for s in walk.steps:
        atoms = s.support
        p = np.array([float(s.atoms[g]) for g in atoms])
        picks.append((atoms, rng.choice(len(atoms), size=trials, p=p / p.sum())))
    ctx = walk.ctx
    if ctx.kind == "rational-matrix-2" and trials > 64:
        return _matrix2_products(ctx, picks, trials)
    mul = ctx.mul
    out = []
    for t in range(trials):
        acc = ctx.identity()
        for atoms, idx in picks:
            acc = mul(atoms[idx[t]], acc)
        out.append(acc)
    return out


def _matrix2_products(ctx, picks, trials):
    # Exact integer arithmetic on numerators: each step's atoms share a denominator q,
    # so the product over all steps has the common denominator prod(q).
    acc = [np.full(trials, 1, dtype=object), np.full(trials, 0, dtype=object),
           np.full(trials, 0, dtype=object), np.full(trials, 1, dtype=object)]
    den = 1
    for atoms, idx in picks:
        q = math.lcm(*(x.denominator for m in atoms for row in m for x in row))
        ent = [np.array([int(m[r][c] * q) for m in atoms], dtype=object)[idx] for r in (0, 1) for c in (0, 1)]
        a, b, c, d = ent
        e, f, g, h = acc
        acc = [a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h]
        den *= q
    out = []
    for t in range(trials):
        out.append(
            ((Fraction(acc[0][t], den), Fraction(acc[1][t], den)), (Fraction(acc[2][t], den), Fraction(acc[3][t], den)))
        )
    return out


def rho_monte_carlo(walk: WalkSpec, trials: int, seed: int) -> MonteCarloEstimate:
    """Collision (unbiased for sum_g P(g)^2) and max-bin statistics from samples.

    Neither number is the exact rho; both are reported as estimates.
    """
    if trials < 2:
        raise DomainError("need at least 2 trials")
    counts = Counter(sample_products(walk, trials, seed))
    pairs = sum(c * (c - 1) for c in counts.values())
    return MonteCarloEstimate(
        collision=pairs / (trials * (trials - 1)),
        max_bin=max(counts.values()) / trials,
        trials=trials,
        distinct=len(counts),
    )


# -------------------------------------------------------------- d_mu metric
@dataclass(frozen=True)
class Distance:
    sq: Fraction

    @property
    def value(self) -> float:
        return sqrt_float(self.sq)


class SemiMetric:
    """``d_mu(g, h)^2 = 2 - 2 <mu, mu(. g h^-1)> / ||mu||_2^2``, exactly.

    This is the normalised l2 distance between ``mu * delta_g`` and ``mu * delta_h``.
    """

    def __init__(self, mu: Measure):
        if not len(mu):
            raise DomainError("d_mu needs a measure with positive l2 norm")
        self.mu = mu
        self._l2num = sum(v * v for v in mu._num.values())

    def overlap_num(self, k) -> int:
        """``sum_s num(s) num(s k)``."""
        num, mul = self.mu._num, self.mu.ctx.mul
        return sum(w * num.get(mul(s, k), 0) for s, w in num.items())

    def sq_shift(self, k) -> Fraction:
        """``d(k, id)^2``."""
        return 2 - Fraction(2 * self.overlap_num(k), self._l2num)

    def sq(self, g, h) -> Fraction:
        ctx = self.mu.ctx
        return self.sq_shift(ctx.mul(g, ctx.inv(h)))

    def __call__(self, g, h) -> Distance:
        return Distance(self.sq(g, h))


def d_mu(mu: Measure, g, h) -> Distance:
    return SemiMetric(mu)(g, h)


def translate_gap_sq(mu: Measure, g, h) -> Fraction:
    """``||mu * delta_g - mu * delta_h||_2^2`` by explicit convolution (slow, independent)."""
    a = convolve(mu, Measure.delta(mu.ctx, g)).atoms
    b = convolve(mu, Measure.delta(mu.ctx, h)).atoms
    return sum(((a.get(x, 0) - b.get(x, 0)) ** 2 for x in set(a) | set(b)), Fraction(0))


@dataclass
class TypicalPairs:
    pairs: set = field(default_factory=set)
    atypical_mass: Fraction = Fraction(0)
    threshold_sq: Fraction = Fraction(0)


def typical_pairs(mu: Measure, eta: Measure, threshold_sq, metric: SemiMetric | None = None) -> TypicalPairs:
    """Classify ordered pairs of ``supp(eta)`` by ``d_mu(g, h)^2 <= threshold_sq``."""
    threshold_sq = Fraction(threshold_sq)
    metric = metric or SemiMetric(mu)
    supp = eta.support
    ctx = mu.ctx
    out = TypicalPairs(threshold_sq=threshold_sq)
    inv = {h: ctx.inv(h) for h in supp}
    memo: dict = {}
    bad = 0
    for g in supp:
        for h in supp:
            k = ctx.mul(g, inv[h])
            if k not in memo:
                memo[k] = metric.sq_shift(k)
            if memo[k] <= threshold_sq:
                out.pairs.add((g, h))
            else:
                bad += eta._num[g] * eta._num[h]
    out.atypical_mass = Fraction(bad, eta._den**2)
    return out


def energy_identity(mu: Measure, eta: Measure) -> tuple[Fraction, Fraction]:
    """Both sides of ``sum_{g,h} ||mu*d_g - mu*d_h||^2 eta(g)eta(h) = 2(||mu||^2 - ||mu*eta||^2)``.

    The left side is summed from explicit translates, independent of :class:`SemiMetric`.
    """
    lhs = Fraction(0)
    for g, wg in eta.atoms.items():
        for h, wh in eta.atoms.items():
            if g != h:
                lhs += translate_gap_sq(mu, g, h) * wg * wh
    rhs = 2 * (norms(mu).l2sq - norms(convolve(mu, eta)).l2sq)
    return lhs, rhs


def walk_from_steps(ctx: GroupContext, steps: Sequence[Mapping], p0=0) -> WalkSpec:
    """Convenience constructor from plain ``{element: weight}`` dicts."""
    return WalkSpec(ctx, tuple(Measure(ctx, s) for s in steps), Fraction(p0))
