"""Anderson-Bernoulli transfer matrices in SL_2(Q).

Products are ``g_n ... g_1`` with ``g_i = [[E + lambda eps_i, -1], [1, 0]]``.
Differences of two transfer matrices with opposite ``eps`` give unipotent
matrices, whose powers generate a free group once the off-diagonal entry
reaches 2; this is what the ball counts below certify at small radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DomainError
from .groups import ball_sizes, rational_matrix_2
from .measure import Measure, WalkSpec, convolve, norms, rho_monte_carlo
from .rational import as_fraction

SL2 = rational_matrix_2()


def transfer_matrix(E, lam, eps):
    E, lam, eps = as_fraction(E), as_fraction(lam), as_fraction(eps)
    g = SL2.element([[E + lam * eps, -1], [1, 0]])
    (a, b), (c, d) = g
    assert a * d - b * c == 1
    return g


def _unipotent(x, upper: bool):
    one, zero = Fraction(1), Fraction(0)
    return ((one, x), (zero, one)) if upper else ((one, zero), (x, one))


@dataclass(frozen=True)
class CommutatorPair:
    g1: tuple
    g2: tuple
    h1: tuple
    h2: tuple
    k0: int
    h1p: tuple
    h2p: tuple
    entry: Fraction  # 2 k0 lambda a, the off-diagonal entry of h1', h2'


def commutator_pair(E, lam, a) -> CommutatorPair:
    """``h1 = g1 g2^-1``, ``h2 = g1^-1 g2`` for ``eps = a, -a``, and their ``k0``-th powers.

    ``k0 = max(ceil(1/(lambda |a|)), 1)`` makes the powered entry at least 2.
    """
    lam, a = as_fraction(lam), as_fraction(a)
    if a == 0:
        raise DomainError("a = 0 makes h1 = h2 = id")
    if lam <= 0:
        raise DomainError("lambda must be positive")
    g1, g2 = transfer_matrix(E, lam, a), transfer_matrix(E, lam, -a)
    h1 = SL2.mul(g1, SL2.inv(g2))
    h2 = SL2.mul(SL2.inv(g1), g2)
    x = 2 * lam * a
    if h1 != _unipotent(x, True) or h2 != _unipotent(x, False):
        raise AssertionError("unipotent identities failed")
    k0 = max(math.ceil(1 / (lam * abs(a))), 1)
    return CommutatorPair(g1, g2, h1, h2, k0, SL2.power(h1, k0), SL2.power(h2, k0), k0 * x)


@dataclass(frozen=True)
class FreeBallReport:
    sizes: tuple
    expected: tuple  # 2 * 3^k - 1, the ball sizes of a free group of rank 2
    free: bool
    hypothesis_met: bool


def free_ball_check(h1p, h2p, kmax: int, cap: int = 5_000_000) -> FreeBallReport:
    """Compare BFS ball sizes with the free-group count for ``k <= kmax``.

    Equality for every ``k`` certifies that no relation of length ``<= 2 kmax`` exists.
    """
    h1p, h2p = SL2.element(h1p), SL2.element(h2p)
    _, sizes = ball_sizes(SL2, [h1p, h2p], kmax, cap)
    expected = tuple(2 * 3**k - 1 for k in range(kmax + 1))
    met = abs(h1p[0][1]) >= 2 and abs(h2p[1][0]) >= 2
    return FreeBallReport(tuple(sizes), expected, tuple(sizes) == expected, met)


# ------------------------------------------------------------- Anderson
@dataclass(frozen=True)
class TransferSpec:
    E: Fraction
    lam: Fraction
    gamma: Fraction
    dists: tuple  # one {eps: weight} for every step, or a single one reused
    n: int
    p0: Fraction = Fraction(0)
    window: int | None = None  # length of windows for the gamma-pair check (default n)

    def __post_init__(self):
        object.__setattr__(self, "E", as_fraction(self.E))
        object.__setattr__(self, "lam", as_fraction(self.lam))
        object.__setattr__(self, "gamma", as_fraction(self.gamma))
        object.__setattr__(self, "p0", as_fraction(self.p0))
        dists = tuple({as_fraction(e): as_fraction(w) for e, w in d.items()} for d in self.dists)
        object.__setattr__(self, "dists", dists)
        if self.lam <= 0 or self.gamma <= 0:
            raise DomainError("lambda and gamma must be positive")
        if self.n < 1:
            raise DomainError("n must be >= 1")
        if len(dists) not in (1, self.n):
            raise DomainError("give one distribution, or one per step")
        for d in dists:
            if sum(d.values()) != 1 or any(w <= self.p0 for w in d.values()):
                raise DomainError("each distribution must sum to 1 with every weight above p0")

    def dist(self, i: int) -> dict:
        return self.dists[0] if len(self.dists) == 1 else self.dists[i - 1]

    def walk(self, n: int | None = None) -> WalkSpec:
        n = self.n if n is None else n
        steps = []
        for i in range(1, n + 1):
            atoms: dict = {}
            for e, w in self.dist(i).items():
                g = transfer_matrix(self.E, self.lam, e)
                atoms[g] = atoms.get(g, 0) + w
            steps.append(Measure(SL2, atoms, validate=False))
        return WalkSpec(SL2, tuple(steps), self.p0)

    def gamma_pairs(self) -> tuple[bool, list]:
        """Every window of ``window`` consecutive steps has ``{a, -a}`` with ``a > gamma``; failing window starts."""
        w = self.window or self.n
        good = [any(e > self.gamma and -e in self.dist(i) for e in self.dist(i)) for i in range(1, self.n + 1)]
        bad = [s for s in range(1, self.n - w + 2) if not any(good[s - 1 : s - 1 + w])]
        return not bad, bad


@dataclass(frozen=True)
class AndersonProfile:
    mode: str
    ns: tuple
    rho: tuple  # exact Fractions, or Monte Carlo max-bin estimates
    collision: tuple  # exact sum P^2, or the unbiased collision estimate
    l2_ok: tuple  # rho^2 <= sum P^2 (exact mode)
    slope: float | None
    gamma_ok: bool
    note: str = "the n^-omega(1) rate is reported, not certified"
    seeds: tuple = field(default=())


def _slope(ns, values):
    pts = [(math.log(n), math.log(float(v))) for n, v in zip(ns, values) if n >= 2 and v > 0]
    if len(pts) < 2:
        return None
    x, y = zip(*pts)
    return float(np.polyfit(x, y, 1)[0])


def anderson_concentration(spec: TransferSpec, mode: str = "exact", trials: int = 100_000, seed: int = 0,
                           ns=None, cap: int = 2_000_000) -> AndersonProfile:
    """``rho(n')`` for ``n' <= n`` and a fitted log-log slope."""
    gamma_ok, _ = spec.gamma_pairs()
    walk = spec.walk()
    if mode == "exact":
        acc = None
        rhos, coll, l2ok = [], [], []
        for i in range(1, spec.n + 1):
            step = walk.step(i)
            acc = step if acc is None else convolve(step, acc, cap)
            r = max(acc.atoms.values())
            l2 = norms(acc).l2sq
            rhos.append(r)
            coll.append(l2)
            l2ok.append(r * r <= l2)
        ns = tuple(range(1, spec.n + 1))
        return AndersonProfile("exact", ns, tuple(rhos), tuple(coll), tuple(l2ok), _slope(ns, rhos), gamma_ok)
    if mode != "monte_carlo":
        raise DomainError(f"unknown mode {mode!r}")
    ns = tuple(ns or (spec.n,))
    seeds = tuple(int(np.random.SeedSequence([seed, k]).generate_state(1)[0]) for k in ns)
    ests = [rho_monte_carlo(spec.walk(k), trials, s) for k, s in zip(ns, seeds)]
    rhos = tuple(e.max_bin for e in ests)
    return AndersonProfile("monte_carlo", ns, rhos, tuple(e.collision for e in ests), (), _slope(ns, rhos),
                           gamma_ok, seeds=seeds)
