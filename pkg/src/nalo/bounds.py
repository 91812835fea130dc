"""Desk-scale checks of the forward concentration bounds and the sharpness examples.

Walks on the integer line and on cyclic groups go through dense dynamic
programming over exact integer counts; everything else uses the generic
convolution engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DomainError
from .groups import GroupContext, cyclic, element_order, integer_matrix
from .measure import Measure, WalkSpec, rho_exact
from .rational import rational_sqrt

SSZ_CONSTANT = math.sqrt(24 / math.pi)
MATRIX_CONSTANT = 141
ASYMPTOTIC_CAVEAT = "asymptotic claim, desk-scale check"


@dataclass(frozen=True)
class BoundCheck:
    name: str
    n: int
    rho: Fraction
    bound: Fraction | float
    passed: bool
    params: dict = field(default_factory=dict)
    caveat: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def slack(self) -> float:
        """``rho / bound`` (1 means the bound is attained)."""
        return float(Fraction(self.rho) / Fraction(self.bound))

    def row(self) -> dict:
        from .rational import fraction_str

        b = fraction_str(self.bound) if isinstance(self.bound, Fraction) else repr(self.bound)
        return {"name": self.name, "n": self.n, "rho": fraction_str(self.rho), "bound": b,
                "slack": f"{self.slack:.6g}", "pass": self.passed}


# ------------------------------------------------------------ dense DPs
def _integer_atoms(walk: WalkSpec):
    """Per step ``(values, numerators, denominator)`` for a walk on the integer line."""
    out = []
    for s in walk.steps:
        atoms = s.atoms
        q = math.lcm(*(w.denominator for w in atoms.values()))
        out.append(([g[0] if isinstance(g, tuple) else g for g in atoms], [int(w * q) for w in atoms.values()], q))
    return out


def line_distribution(walk: WalkSpec) -> tuple[int, list, int]:
    """Exact law of the sum on the integer line as ``(offset, counts, denominator)``.

    ``P(sum = offset + k) = counts[k] / denominator``.
    """
    if walk.ctx.kind != "lattice" or walk.ctx.param != 1:
        raise DomainError("line DP needs a walk on lattice(1)")
    steps = _integer_atoms(walk)
    lo = sum(min(v) for v, _, _ in steps)
    hi = sum(max(v) for v, _, _ in steps)
    arr = np.zeros(hi - lo + 1, dtype=object)
    arr[-lo] = 1  # index k holds the sum lo + k
    den = 1
    cur_lo = cur_hi = 0  # occupied range, relative to 0
    for vals, nums, q in steps:
        new = np.zeros_like(arr)
        a, b = cur_lo - lo, cur_hi - lo + 1
        for v, w in zip(vals, nums):
            new[a + v : b + v] += arr[a:b] * w
        arr = new
        cur_lo += min(vals)
        cur_hi += max(vals)
        den *= q
    return lo, list(arr), den


def cyclic_distribution(m: int, steps) -> tuple[list, int]:
    """Law of a sum of independent residues mod ``m``; steps are ``{residue: weight}`` dicts."""
    arr = [0] * m
    arr[0] = 1
    den = 1
    for s in steps:
        q = math.lcm(*(Fraction(w).denominator for w in s.values()))
        new = [0] * m
        for v, w in s.items():
            k = int(Fraction(w) * q)
            v %= m
            for r, c in enumerate(arr):
                if c:
                    new[(r + v) % m] += c * k
        arr, den = new, den * q
    return arr, den


def _cyclic_reduction(walk: WalkSpec, cap: int = 10_000):
    """Exponents of every atom in a cyclic subgroup ``<g>``, or None.

    ``g`` is the first non-identity atom; succeeds only when every atom is a
    power of it (with finite order at most ``cap``).
    """
    ctx = walk.ctx
    ident = ctx.identity()
    g = next((a for s in walk.steps for a in s.support if a != ident), None)
    if g is None:
        return 1, [{0: 1} for _ in walk.steps]
    order = element_order(ctx, g, cap)
    if order is None:
        return None
    powers = {}
    x = ident
    for k in range(order):
        powers[x] = k
        x = ctx.mul(x, g)
    steps = []
    for s in walk.steps:
        if any(a not in powers for a in s.atoms):
            return None
        steps.append({powers[a]: w for a, w in s.atoms.items()})
    return order, steps


def exact_rho(walk: WalkSpec) -> Fraction:
    """Exact ``rho`` using the fastest applicable route."""
    ctx = walk.ctx
    if ctx.kind == "lattice" and ctx.param == 1:
        _, counts, den = line_distribution(walk)
        return Fraction(max(counts), den)
    if ctx.kind == "cyclic":
        counts, den = cyclic_distribution(ctx.param, [s.atoms for s in walk.steps])
        return Fraction(max(counts), den)
    red = _cyclic_reduction(walk)
    if red is not None:
        counts, den = cyclic_distribution(red[0], red[1])
        return Fraction(max(counts), den)
    return rho_exact(walk).rho


# ---------------------------------------------------------- hypotheses
def _symmetric_pairs(walk: WalkSpec, name: str) -> list:
    """``a_i`` per step for steps uniform on ``{a_i, a_i^-1}`` with ``a_i != id``."""
    ctx = walk.ctx
    out = []
    for i, s in enumerate(walk.steps, 1):
        supp = s.support
        if ctx.identity() in supp:
            raise DomainError(f"{name}: step {i} has a_i = identity")
        a = max(supp)
        if set(supp) != {a, ctx.inv(a)} or any(w != Fraction(1, len(supp)) for w in s.atoms.values()):
            raise DomainError(f"{name}: step {i} is not uniform on a symmetric pair {{a, a^-1}}")
        out.append(a)
    return out


def _torsion_free_abelian(ctx: GroupContext, name: str):
    if ctx.kind != "lattice":
        raise DomainError(f"{name} needs a walk on an integer lattice (torsion-free abelian group)")


def elo_bound(n: int) -> Fraction:
    return Fraction(math.comb(n, n // 2), 2**n)


def check_elo(walk: WalkSpec) -> BoundCheck:
    """``rho <= C(n, n//2) / 2^n`` for steps uniform on ``{a_i, -a_i}`` with ``a_i != 0``."""
    _torsion_free_abelian(walk.ctx, "check_elo")
    _symmetric_pairs(walk, "check_elo")
    rho = exact_rho(walk)
    bound = elo_bound(walk.n)
    return BoundCheck("elo", walk.n, rho, bound, rho <= bound)


def check_ssz(walk: WalkSpec, C=3.0) -> BoundCheck:
    """``rho <= C n^-3/2`` for distinct ``a_i``; the reference constant sqrt(24/pi) is reported alongside."""
    _torsion_free_abelian(walk.ctx, "check_ssz")
    a = _symmetric_pairs(walk, "check_ssz")
    if len(set(a)) != len(a):
        raise DomainError("check_ssz: the a_i are not distinct")
    n = walk.n
    rho = exact_rho(walk)
    Cq = Fraction(C)
    # rho <= C n^-3/2  <=>  rho^2 n^3 <= C^2, all exact
    passed = rho * rho * n**3 <= Cq * Cq
    return BoundCheck(
        "ssz", n, rho, float(C) * n**-1.5, passed, {"C": float(C)}, ASYMPTOTIC_CAVEAT,
        {"rho_n32": float(rho) * n**1.5, "reference_constant": SSZ_CONSTANT},
    )


def check_matrix_elo(walk: WalkSpec, s: int, delta=None) -> BoundCheck:
    """``rho <= 141 max(1/s, 1/sqrt n)`` when every ``a_i`` has order at least ``s``."""
    ctx = walk.ctx
    if s < 1:
        raise DomainError("s must be positive")
    seen: dict = {}  # support -> None, or the error for that step law
    for i, st in enumerate(walk.steps, 1):
        key = tuple(sorted(st.atoms.items()))
        if key not in seen:
            supp = st.support
            a = max(supp)
            err = None
            if set(supp) != {a, ctx.inv(a)} or any(w != Fraction(1, len(supp)) for w in st.atoms.values()):
                err = "is not uniform on {a, a^-1}"
            elif s > 1 and (o := element_order(ctx, a, s - 1)) is not None:
                err = f"has order {o} < s = {s}"
            seen[key] = err
        if seen[key]:
            raise DomainError(f"check_matrix_elo: step {i} {seen[key]}")
    n = walk.n
    rho = exact_rho(walk)
    root = rational_sqrt(Fraction(n))
    if root is not None:
        bound = MATRIX_CONSTANT * max(Fraction(1, s), 1 / root)
        passed = rho <= bound
    else:
        bound = MATRIX_CONSTANT * max(1 / s, n**-0.5)
        # rho <= 141/s, or rho <= 141/sqrt(n)  <=>  rho^2 n <= 141^2
        passed = rho <= Fraction(MATRIX_CONSTANT, s) or rho * rho * n <= MATRIX_CONSTANT**2
    extra = {"constant": MATRIX_CONSTANT}
    caveat = ""
    if delta is not None:
        d = float(delta)
        extra["main_bound"] = max(1 / s, n ** -(0.5 - d))
        extra["main_bound_distinct"] = n ** -(1 - d)
        caveat = ASYMPTOTIC_CAVEAT
    return BoundCheck("matrix-elo", n, rho, bound, passed, {"s": s}, caveat, extra)


# ------------------------------------------------------------ sharpness
@dataclass(frozen=True)
class SharpnessExample:
    label: str
    walk: WalkSpec
    rho: Fraction
    note: str


def _involutions(n: int):
    m = 1
    while 2**m - 1 < n:
        m += 1
    out = []
    for mask in range(1, 2**m):
        out.append(tuple(tuple((-1 if mask >> i & 1 else 1) * int(i == j) for j in range(m)) for i in range(m)))
        if len(out) == n:
            break
    return m, out


def sharpness_examples(n: int) -> list:
    """(a) lazy unit steps in ``cyclic(n)``; (b) point masses at distinct commuting involutions."""
    if n < 4:
        raise DomainError("sharpness examples need n >= 4")
    C = cyclic(n)
    wa = WalkSpec(C, tuple(Measure(C, {0: Fraction(1, 2), 1: Fraction(1, 2)}) for _ in range(n)))
    m, invs = _involutions(n)
    G = integer_matrix(m)
    wb = WalkSpec(G, tuple(Measure(G, {a: 1}) for a in invs))
    return [
        SharpnessExample("subgroup", wa, exact_rho(wa), "steps {0, 1} in a cyclic group of order n: rho >= 1/n"),
        SharpnessExample("order-two", wb, exact_rho(wb),
                         "A_i = {a_i, a_i^-1} = {a_i} for involutions: rho = 1, so the symmetric-pair hypothesis is needed"),
    ]
