"""Exact algebra on the concrete groups that walks and progressions live in.

Elements are plain immutable Python values in canonical form, so that ``==`` and
``hash`` are group equality and hashing:

* ``cyclic(m)``           residue ``int`` in ``[0, m)``
* ``lattice(d)``          ``tuple`` of ``d`` ints
* ``symmetric(k)``        ``tuple`` of 0-based images; ``(a*b)(i) = a(b(i))``
* ``heisenberg``          ``(a, b, c)`` for the matrix ``[[1,a,c],[0,1,b],[0,0,1]]``
* ``integer-matrix(m)``   tuple of row tuples of ints, determinant +-1
* ``rational-matrix-2``   ``((a, b), (c, d))`` of Fractions, determinant 1

The natural Python ordering of these values is the canonical element order used
for deterministic tie-breaking everywhere else.
"""

from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Hashable, Iterable

import numpy as np

from .errors import DomainError, ResourceError

Element = Hashable

KINDS = ("cyclic", "lattice", "symmetric", "heisenberg", "integer-matrix", "rational-matrix-2")
DEFAULT_BALL_CAP = 10**7

_NUM = re.compile(r"-?\d+(?:/\d+)?")


def _det(rows) -> Fraction:
    # Bareiss would avoid fractions; sizes here are tiny
    m = [[Fraction(x) for x in r] for r in rows]
    n = len(m)
    det = Fraction(1)
    for col in range(n):
        piv = next((r for r in range(col, n) if m[r][col] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != col:
            m[col], m[piv] = m[piv], m[col]
            det = -det
        det *= m[col][col]
        for r in range(col + 1, n):
            f = m[r][col] / m[col][col]
            if f:
                m[r] = [a - f * b for a, b in zip(m[r], m[col])]
    return det


def _inverse_matrix(rows) -> list[list[Fraction]]:
    n = len(rows)
    aug = [[Fraction(x) for x in r] + [Fraction(int(i == j)) for j in range(n)] for i, r in enumerate(rows)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if piv is None:
            raise DomainError("matrix is singular")
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        aug[col] = [x / p for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col]:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


@dataclass(frozen=True)
class GroupContext:
    """A concrete group. ``param`` is m, d, k or the matrix size, per ``kind``."""

    kind: str
    param: int | None = None
    _mul: Any = field(init=False, repr=False, compare=False, hash=False)
    _inv: Any = field(init=False, repr=False, compare=False, hash=False)
    _id: Any = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        kind, p = self.kind, self.param
        if kind not in KINDS:
            raise DomainError(f"unknown group kind {kind!r}")
        if kind == "heisenberg":
            object.__setattr__(self, "param", None)
        elif kind == "rational-matrix-2":
            object.__setattr__(self, "param", 2)
        elif not isinstance(p, int) or p < 1:
            raise DomainError(f"{kind} needs a positive integer parameter, got {p!r}")
        set_ = lambda name, v: object.__setattr__(self, name, v)  # noqa: E731
        p = self.param
        if kind == "cyclic":
            set_("_mul", lambda a, b: (a + b) % p)
            set_("_inv", lambda a: (-a) % p)
            set_("_id", 0)
        elif kind == "lattice":
            set_("_mul", lambda a, b: tuple(x + y for x, y in zip(a, b)))
            set_("_inv", lambda a: tuple(-x for x in a))
            set_("_id", (0,) * p)
        elif kind == "symmetric":
            set_("_mul", lambda a, b: tuple(a[i] for i in b))

            def inv(a):
                out = [0] * len(a)
                for i, x in enumerate(a):
                    out[x] = i
                return tuple(out)

            set_("_inv", inv)
            set_("_id", tuple(range(p)))
        elif kind == "heisenberg":
            set_("_mul", lambda x, y: (x[0] + y[0], x[1] + y[1], x[2] + y[2] + x[0] * y[1]))
            set_("_inv", lambda x: (-x[0], -x[1], x[0] * x[1] - x[2]))
            set_("_id", (0, 0, 0))
        else:
            if kind == "rational-matrix-2":
                one, zero = Fraction(1), Fraction(0)

                def mul(x, y):
                    (a, b), (c, d) = x
                    (e, f), (g, h) = y
                    return ((a * e + b * g, a * f + b * h), (c * e + d * g, c * f + d * h))

                set_("_mul", mul)
                # det = 1, so the inverse is the adjugate
                set_("_inv", lambda x: ((x[1][1], -x[0][1]), (-x[1][0], x[0][0])))
                set_("_id", ((one, zero), (zero, one)))
            else:
                cols = range(p)

                def mul(x, y):
                    yt = tuple(zip(*y))
                    return tuple(tuple(sum(a * b for a, b in zip(row, col)) for col in yt) for row in x)

                def inv(x):
                    return tuple(tuple(int(v) for v in row) for row in _inverse_matrix(x))

                set_("_mul", mul)
                set_("_inv", inv)
                set_("_id", tuple(tuple(int(i == j) for j in cols) for i in cols))

    def __reduce__(self):
        return (GroupContext, (self.kind, self.param))

    # ------------------------------------------------------------------ algebra
    def identity(self) -> Element:
        return self._id

    def mul(self, a: Element, b: Element) -> Element:
        return self._mul(a, b)

    def inv(self, a: Element) -> Element:
        return self._inv(a)

    def prod(self, elems: Iterable[Element]) -> Element:
        out = self._id
        for e in elems:
            out = self._mul(out, e)
        return out

    def power(self, g: Element, k: int) -> Element:
        if k < 0:
            g, k = self._inv(g), -k
        out, base = self._id, g
        while k:
            if k & 1:
                out = self._mul(out, base)
            base = self._mul(base, base)
            k >>= 1
        return out

    def commutator(self, a: Element, b: Element) -> Element:
        """``[a, b] = a^-1 b^-1 a b``, so that ``b a = a b [b, a]``."""
        return self._mul(self._mul(self._inv(a), self._inv(b)), self._mul(a, b))

    def conj(self, x: Element, g: Element) -> Element:
        """``x g x^-1``."""
        return self._mul(self._mul(x, g), self._inv(x))

    @property
    def is_abelian(self) -> bool:
        return self.kind in ("cyclic", "lattice") or (self.kind == "symmetric" and self.param <= 2)

    @property
    def is_finite(self) -> bool:
        return self.kind in ("cyclic", "symmetric")

    # --------------------------------------------------------------- validation
    def element(self, value) -> Element:
        """Coerce ``value`` into canonical form, raising DomainError if invalid."""
        kind, p = self.kind, self.param
        try:
            if kind == "cyclic":
                if isinstance(value, bool) or not isinstance(value, (int, np.integer, Fraction)):
                    raise DomainError(f"cyclic residue must be an integer, got {value!r}")
                if isinstance(value, Fraction) and value.denominator != 1:
                    raise DomainError(f"cyclic residue must be an integer, got {value}")
                return int(value) % p
            if kind in ("lattice", "heisenberg"):
                d = 3 if kind == "heisenberg" else p
                if kind == "heisenberg" and len(value) == 3 and not isinstance(value[0], (list, tuple)):
                    vec = value
                elif kind == "heisenberg":
                    rows = [list(r) for r in value]
                    if len(rows) != 3 or [rows[0][0], rows[1][:2], rows[2]] != [1, [0, 1], [0, 0, 1]]:
                        raise DomainError(f"not an upper unitriangular 3x3 matrix: {value!r}")
                    vec = (rows[0][1], rows[1][2], rows[0][2])
                else:
                    vec = value
                vec = tuple(_as_int(x) for x in vec)
                if len(vec) != d:
                    raise DomainError(f"expected {d} coordinates, got {len(vec)}")
                return vec
            if kind == "symmetric":
                img = tuple(_as_int(x) for x in value)
                if sorted(img) != list(range(p)):
                    raise DomainError(f"not a permutation of 0..{p - 1}: {value!r}")
                return img
            rows = [list(r) for r in value]
            if len(rows) != p or any(len(r) != p for r in rows):
                raise DomainError(f"expected a {p}x{p} matrix, got {value!r}")
            if kind == "integer-matrix":
                m = tuple(tuple(_as_int(x) for x in r) for r in rows)
                if _det(m) not in (1, -1):
                    raise DomainError(f"integer matrix is not invertible over Z (det != +-1): {value!r}")
                return m
            m = tuple(tuple(Fraction(x) for x in r) for r in rows)
            if m[0][0] * m[1][1] - m[0][1] * m[1][0] != 1:
                raise DomainError(f"rational matrix must have determinant 1: {value!r}")
            return m
        except (TypeError, ValueError) as exc:
            if isinstance(exc, DomainError):
                raise
            raise DomainError(f"invalid element for {self}: {value!r} ({exc})") from exc

    def is_valid(self, value) -> bool:
        try:
            return self.element(value) == value
        except DomainError:
            return False

    # ----------------------------------------------------------------- encoding
    def encode(self, g: Element) -> str:
        """Text encoding shared by every file format."""
        kind = self.kind
        if kind == "cyclic":
            return str(g)
        if kind == "lattice":
            return "[" + ",".join(str(x) for x in g) + "]"
        if kind == "symmetric":
            return "[" + ",".join(str(x + 1) for x in g) + "]"
        if kind == "heisenberg":
            a, b, c = g
            rows = ((1, a, c), (0, 1, b), (0, 0, 1))
        else:
            rows = g
        return "[" + ",".join("[" + ",".join(_num_str(x) for x in r) + "]" for r in rows) + "]"

    def decode(self, text) -> Element:
        """Inverse of :meth:`encode`; also accepts already-parsed JSON values."""
        if not isinstance(text, str):
            value = text
        else:
            s = text.strip()
            if self.kind == "cyclic":
                return self.element(_as_int(s))
            value = json.loads(_NUM.sub(lambda m: f'"{m.group(0)}"', s))
        value = _parse_numbers(value)
        if self.kind == "symmetric":
            value = [x - 1 for x in value]
        return self.element(value)

    def to_json(self) -> dict:
        key = {"cyclic": "m", "lattice": "d", "symmetric": "k", "integer-matrix": "m"}.get(self.kind)
        return {"kind": self.kind, key: self.param} if key else {"kind": self.kind}

    @classmethod
    def from_json(cls, obj: dict) -> "GroupContext":
        kind = obj.get("kind")
        key = {"cyclic": "m", "lattice": "d", "symmetric": "k", "integer-matrix": "m"}.get(kind)
        if kind not in KINDS:
            raise DomainError(f"unknown group kind {kind!r}")
        return cls(kind, obj.get(key) if key else None)

    def __str__(self):
        return self.kind if self.param is None or self.kind == "rational-matrix-2" else f"{self.kind}({self.param})"


def _as_int(x) -> int:
    if isinstance(x, bool):
        raise DomainError("booleans are not integers")
    if isinstance(x, (int, np.integer)):
        return int(x)
    q = Fraction(x)
    if q.denominator != 1:
        raise DomainError(f"expected an integer, got {x!r}")
    return int(q)


def _num_str(x) -> str:
    q = Fraction(x)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _parse_numbers(v):
    if isinstance(v, list):
        return [_parse_numbers(x) for x in v]
    if isinstance(v, str):
        q = Fraction(v)
        return int(q) if q.denominator == 1 else q
    return v


# Named constructors, mirroring the kinds.
def cyclic(m: int) -> GroupContext:
    return GroupContext("cyclic", m)


def lattice(d: int) -> GroupContext:
    return GroupContext("lattice", d)


def symmetric(k: int) -> GroupContext:
    return GroupContext("symmetric", k)


def heisenberg() -> GroupContext:
    return GroupContext("heisenberg")


def integer_matrix(m: int) -> GroupContext:
    return GroupContext("integer-matrix", m)


def rational_matrix_2() -> GroupContext:
    return GroupContext("rational-matrix-2")


def group_algebra(ctx: GroupContext, op: str, *args):
    """Dispatch ``mul`` / ``inv`` / ``id`` after validating the arguments."""
    elems = [ctx.element(a) for a in args]
    if op == "id":
        return ctx.identity()
    if op == "inv":
        (a,) = elems
        return ctx.inv(a)
    if op == "mul":
        return ctx.prod(elems)
    raise DomainError(f"unknown operation {op!r}")


def element_order(ctx: GroupContext, g: Element, cap: int):
    """Smallest k <= cap with g^k = id, or None when the order exceeds ``cap``."""
    if cap < 1:
        raise DomainError("cap must be >= 1")
    ident = ctx.identity()
    x = g
    for k in range(1, cap + 1):
        if x == ident:
            return k
        x = ctx.mul(x, g)
    return None


def ball(ctx: GroupContext, gens: Iterable[Element], k: int, cap: int = DEFAULT_BALL_CAP) -> set:
    """All products of at most ``k`` letters from ``gens`` and their inverses."""
    return ball_sizes(ctx, gens, k, cap)[0]


def ball_sizes(ctx: GroupContext, gens, k: int, cap: int = DEFAULT_BALL_CAP) -> tuple[set, list[int]]:
    """BFS ball of radius ``k`` together with ``|B_0|, ..., |B_k|``."""
    gens = list(gens)
    if k < 0:
        raise DomainError("radius must be >= 0")
    if not gens:
        raise DomainError("need at least one generator")
    letters = list(dict.fromkeys(gens + [ctx.inv(g) for g in gens]))
    seen = {ctx.identity()}
    frontier = [ctx.identity()]
    sizes = [1]
    for radius in range(1, k + 1):
        nxt = []
        for x in frontier:
            for s in letters:
                y = ctx.mul(x, s)
                if y not in seen:
                    seen.add(y)
                    nxt.append(y)
                    if len(seen) > cap:
                        raise ResourceError(
                            f"ball exceeded cap {cap} at radius {radius}",
                            {"radius": radius, "count": len(seen), "sizes": sizes},
                        )
        frontier = nxt
        sizes.append(len(seen))
    return seen, sizes


# ------------------------------------------------------------ product sets
def _to_array(ctx: GroupContext, elems) -> np.ndarray | None:
    if ctx.kind == "cyclic":
        return np.fromiter(elems, dtype=np.int64).reshape(-1, 1)
    if ctx.kind in ("lattice", "heisenberg"):
        arr = np.array(list(elems), dtype=np.int64)
        return arr.reshape(len(arr), -1)
    return None


def _array_product(ctx: GroupContext, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    a = A[:, None, :]
    b = B[None, :, :]
    if ctx.kind == "cyclic":
        out = (a + b) % ctx.param
    elif ctx.kind == "lattice":
        out = a + b
    else:
        out = a + b
        out[..., 2] += a[..., 0] * b[..., 1]
    return out.reshape(-1, A.shape[1])


def product_set(ctx: GroupContext, A, B, cap: int = DEFAULT_BALL_CAP) -> set:
    """``{a*b : a in A, b in B}``, vectorised for the integer-coordinate groups."""
    A, B = list(A), list(B)
    if not A or not B:
        return set()
    arrA = _to_array(ctx, A)
    if arrA is None or len(A) * len(B) < 4096:
        out = set()
        mul = ctx.mul
        for a in A:
            for b in B:
                out.add(mul(a, b))
            if len(out) > cap:
                raise ResourceError(f"product set exceeded cap {cap}", {"count": len(out)})
        return out
    arrB = _to_array(ctx, B)
    box = _output_box(ctx, arrA, arrB)
    if box is not None:
        return _bitmap_product(ctx, arrA, arrB, box, cap)
    chunk = max(1, 2_000_000 // len(B))
    parts = []
    total = 0
    for start in range(0, len(A), chunk):
        prod = np.unique(_array_product(ctx, arrA[start : start + chunk], arrB), axis=0)
        parts.append(prod)
        total += len(prod)
        if len(parts) > 8:
            parts = [np.unique(np.concatenate(parts), axis=0)]
            total = len(parts[0])
        if total > cap and np.unique(np.concatenate(parts), axis=0).shape[0] > cap:
            raise ResourceError(f"product set exceeded cap {cap}", {"count": total})
    allp = np.unique(np.concatenate(parts), axis=0)
    return _from_rows(ctx, allp, cap)


def _from_rows(ctx, rows, cap):
    if len(rows) > cap:
        raise ResourceError(f"product set exceeded cap {cap}", {"count": len(rows)})
    if ctx.kind == "cyclic":
        return {int(x) for x in rows[:, 0]}
    return {tuple(int(v) for v in row) for row in rows}


_BITMAP_LIMIT = 200_000_000


def _output_box(ctx, A, B):
    """Per-coordinate (lo, hi) bounds of all products, if the box is small enough."""
    lo = A.min(axis=0) + B.min(axis=0)
    hi = A.max(axis=0) + B.max(axis=0)
    if ctx.kind == "cyclic":
        lo, hi = np.zeros(1, dtype=np.int64), np.full(1, ctx.param - 1, dtype=np.int64)
    elif ctx.kind == "heisenberg":
        ends = [x * y for x in (A[:, 0].min(), A[:, 0].max()) for y in (B[:, 1].min(), B[:, 1].max())]
        lo[2] += min(ends)
        hi[2] += max(ends)
    span = [int(h) - int(l) + 1 for l, h in zip(lo, hi)]
    vol = 1
    for s in span:
        vol *= s
    if vol > _BITMAP_LIMIT or max(abs(int(v)) for v in (*lo, *hi)) > 2**40:
        return None
    return lo, np.array(span, dtype=np.int64)


def _bitmap_product(ctx, A, B, box, cap):
    lo, span = box
    strides = np.ones(len(span), dtype=np.int64)
    for i in range(len(span) - 2, -1, -1):
        strides[i] = strides[i + 1] * span[i + 1]
    bitmap = np.zeros(int(np.prod(span)), dtype=bool)
    chunk = max(1, 4_000_000 // len(B))
    for start in range(0, len(A), chunk):
        prod = _array_product(ctx, A[start : start + chunk], B)
        bitmap[(prod - lo) @ strides] = True
    flat = np.flatnonzero(bitmap)
    if len(flat) > cap:
        raise ResourceError(f"product set exceeded cap {cap}", {"count": int(len(flat))})
    rows = np.empty((len(flat), len(span)), dtype=np.int64)
    rem = flat
    for i in range(len(span)):
        rows[:, i], rem = np.divmod(rem, strides[i])
    return _from_rows(ctx, rows + lo, cap)


def subgroup_closure(ctx: GroupContext, gens, cap: int = 100_000) -> frozenset:
    """The finite subgroup generated by ``gens`` (ResourceError if it is too big)."""
    gens = list(gens)
    seen = {ctx.identity()}
    frontier = [ctx.identity()]
    while frontier:
        nxt = []
        for x in frontier:
            for s in gens:
                y = ctx.mul(x, s)
                if y not in seen:
                    seen.add(y)
                    nxt.append(y)
                    if len(seen) > cap:
                        raise ResourceError(f"subgroup closure exceeded cap {cap}", {"count": len(seen)})
        frontier = nxt
    # a finite monoid generated inside a group is a subgroup
    return frozenset(seen)
