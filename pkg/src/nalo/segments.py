"""Dyadic search for a flat convolution segment of a walk.

Windows are closed step ranges: ``[i, j]`` means ``mu_j * ... * mu_i`` (1-based).
Every comparison of l2 norms is done on exact squares; thresholds of the form
``1 - n^-tau`` use a rational lower bound for ``n^-tau``, which only makes
the checked inequality stronger.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field, replace
from fractions import Fraction

from .errors import DomainError, NoFlatSegment
from .measure import DEFAULT_SUPPORT_CAP, Measure, WalkSpec, convolve, interval_measure, norms
from .rational import floor_power, power_bounds

DEFAULT_C = Fraction(1, 16)


class WindowNorms:
    """Memo of ``mu_[i,j]`` and its squared l2 norm.

    Measures are grown leftwards from a fixed right end, so all windows sharing a
    right end cost one convolution each.
    """

    def __init__(self, walk: WalkSpec, cap: int = DEFAULT_SUPPORT_CAP):
        self.walk = walk
        self.cap = cap
        self._meas: dict[tuple[int, int], Measure] = {}
        self._lefts: dict[int, list[int]] = {}
        self._norm: dict[tuple[int, int], Fraction] = {}
        self._cache: dict = {}

    def measure(self, i: int, j: int) -> Measure:
        if not 1 <= i <= j <= self.walk.n:
            raise DomainError(f"window [{i},{j}] outside 1..{self.walk.n}")
        key = (i, j)
        if key in self._meas:
            return self._meas[key]
        lefts = self._lefts.setdefault(j, [])
        pos = bisect.bisect_right(lefts, i)
        if pos < len(lefts):
            k = lefts[pos]
            acc = self._meas[(k, j)]
        else:
            k, acc = j, self.walk.step(j)
            self._store(k, j, acc)
        while k > i:
            k -= 1
            acc = convolve(acc, self.walk.step(k), self.cap, self._cache)
            self._store(k, j, acc)
        return acc

    def _store(self, i, j, m):
        self._meas[(i, j)] = m
        bisect.insort(self._lefts[j], i)

    def sq(self, i: int, j: int) -> Fraction:
        key = (i, j)
        if key not in self._norm:
            self._norm[key] = norms(self.measure(i, j)).l2sq
        return self._norm[key]

    def tested(self) -> list[tuple[int, int, Fraction]]:
        return [(i, j, v) for (i, j), v in sorted(self._norm.items())]


@dataclass(frozen=True)
class DescentLevel:
    i: int
    l: int
    window_sq: Fraction
    max_sub_sq: Fraction
    argmax_sub: int
    flat: bool


@dataclass(frozen=True)
class SegmentReport:
    i0: int
    l0: int
    j0: int
    l0star: int
    c: Fraction
    eps: Fraction
    tau: Fraction
    m_bound: int
    threshold: Fraction  # rational lower bound of n^-tau
    coarse_ratio_sq: Fraction
    ratio1_sq: Fraction
    ratio2_sq: tuple = ()
    chain: tuple = ()
    source: str = "refinement"
    windows: tuple = field(default=(), compare=False, repr=False)

    @property
    def mu_window(self) -> tuple[int, int]:
        return self.j0, self.j0 + self.l0star

    @property
    def nu_window(self) -> tuple[int, int]:
        return self.j0 - self.l0star, self.j0 - 1

    def to_json(self) -> dict:
        from .rational import fraction_str as fs

        return {
            "i0": self.i0, "l0": self.l0, "j0": self.j0, "l0star": self.l0star,
            "c": fs(self.c), "eps": fs(self.eps), "tau": fs(self.tau), "m_bound": self.m_bound,
            "threshold": fs(self.threshold), "coarse_ratio_sq": fs(self.coarse_ratio_sq),
            "ratio1_sq": fs(self.ratio1_sq), "ratio2_sq": [fs(r) for r in self.ratio2_sq],
            "source": self.source,
            "chain": [
                {"i": lv.i, "l": lv.l, "window_sq": fs(lv.window_sq), "max_sub_sq": fs(lv.max_sub_sq),
                 "argmax_sub": lv.argmax_sub, "flat": lv.flat}
                for lv in self.chain
            ],
        }


def _sub_windows(i: int, l: int) -> list[tuple[int, int]]:
    h = l // 2
    return [(a, a + h) for a in range(i, i + (7 * l) // 2 + 1)]


def descend(walk: WalkSpec, c: Fraction, memo: WindowNorms) -> list[DescentLevel]:
    """Nested descent ``l -> l/8`` until ``||mu_[i,i+4l]|| >= c max ||sub-window||``.

    Raises NoFlatSegment (carrying the chain) when ``l`` drops below 2.
    """
    n = walk.n
    i, l = 1, (n - 1) // 4
    chain: list[DescentLevel] = []
    c2 = c * c
    while True:
        if l < 2:
            raise NoFlatSegment(f"descent ran out of indices (l={l}) without a flat window", chain)
        big = memo.sq(i, i + 4 * l)
        subs = [(memo.sq(a, b), a) for a, b in _sub_windows(i, l)]
        top = max(s for s, _ in subs)
        # greedy: among violators take the largest norm, ties to the leftmost start
        arg = min(a for s, a in subs if s == top)
        flat = big >= c2 * top
        chain.append(DescentLevel(i, l, big, top, arg, flat))
        if flat:
            return chain
        i, l = arg, l // 8


def _check_candidate(memo, n, j0, ls, c2, m_bound, keep):
    """Return (ratio1_sq, ratio2_sq list) if both inequalities hold, else None."""
    if ls < max(m_bound, 1) or j0 - ls < 1 or j0 + ls > n or j0 - m_bound < 1:
        return None
    base = memo.sq(j0, j0 + ls)
    ratios = []
    for m in range(1, m_bound + 1):
        r = memo.sq(j0 - m, j0 + ls) / base
        if r < keep:
            return None
        ratios.append(r)
    whole = memo.sq(j0 - ls, j0 + ls)
    side = max(memo.sq(j0 - ls, j0 - 1), base)
    if whole < c2 * side:
        return None
    return whole / side, ratios


def find_flat_segment(
    walk: WalkSpec,
    c=DEFAULT_C,
    eps=Fraction(1, 2),
    tau=None,
    cap: int = DEFAULT_SUPPORT_CAP,
    c_halvings: int = 6,
    memo: WindowNorms | None = None,
    full_scan: bool = False,
) -> SegmentReport:
    """Coarse descent then refinement, returning a window that passes :func:`verify_segment`.

    ``tau`` is the threshold exponent in ``1 - n^-tau`` (defaults to ``eps``). If no
    segment works at ``c`` the search retries with ``c/2, c/4, ...`` up to
    ``c_halvings`` times and reports the constant that succeeded. When the
    refinement candidates all fail, windows ending at ``i0+2l0``, ``i0+4l0`` and ``n``
    are scanned; ``full_scan`` extends this to every right end (quadratic cost).
    """
    c, eps = Fraction(c), Fraction(eps)
    tau = eps if tau is None else Fraction(tau)
    if not (0 < eps < 1) or c <= 0:
        raise DomainError("need 0 < eps < 1 and c > 0")
    memo = memo or WindowNorms(walk, cap)
    n = walk.n
    last: NoFlatSegment | None = None
    for k in range(c_halvings + 1):
        ck = c / 2**k
        try:
            rep = _search(walk, ck, eps, tau, memo, full_scan)
            return replace(rep, windows=tuple(memo.tested()))
        except NoFlatSegment as exc:
            last = exc
    raise NoFlatSegment(f"no flat segment for n={n} down to c={c / 2**c_halvings}: {last}", last.chain if last else [])


def _search(walk, c, eps, tau, memo, full_scan=False) -> SegmentReport:
    n = walk.n
    chain = descend(walk, c, memo)
    lv = chain[-1]
    i0, l0 = lv.i, lv.l
    step = max(floor_power(n, 1 - eps), 1)
    m_bound = floor_power(n, 1 - eps)
    t_lo = power_bounds(n, -tau)[0]
    keep = (1 - t_lo) ** 2
    c2 = c * c
    coarse = lv.window_sq / lv.max_sub_sq
    J = floor_power(n, eps / 2) // 2

    def build(j0, ls, found, source):
        r1, r2 = found
        return SegmentReport(i0, l0, j0, ls, c, eps, tau, m_bound, t_lo, coarse, r1, tuple(r2), tuple(chain), source)

    for j in range(J + 1):
        lo, hi = i0 + l0 - (j + 1) * step, i0 + l0 - j * step
        if lo < 1:
            break
        if memo.sq(lo, i0 + 2 * l0) < keep * memo.sq(hi, i0 + 2 * l0):
            continue
        j0 = hi
        ls = i0 + 2 * l0 - j0
        found = _check_candidate(memo, n, j0, ls, c2, m_bound, keep)
        if found:
            return build(j0, ls, found, "refinement")
    # fallback: the coarse window's natural right ends, optionally every other one
    rights = (i0 + 2 * l0, i0 + 4 * l0, n) + (tuple(range(n, 0, -1)) if full_scan else ())
    for right in dict.fromkeys(rights):
        for ls in range(right // 2, max(m_bound, 1) - 1, -1):
            j0 = right - ls
            found = _check_candidate(memo, n, j0, ls, c2, m_bound, keep)
            if found:
                return build(j0, ls, found, "scan")
    raise NoFlatSegment(f"no window satisfies both flatness inequalities at c={c}", chain)


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: str = ""

    def __bool__(self):
        return self.ok


def verify_segment(walk: WalkSpec, report: SegmentReport, cap: int = DEFAULT_SUPPORT_CAP) -> Verdict:
    """Recompute every window from scratch and re-check all inequalities exactly."""
    n = walk.n
    j0, ls, c2 = report.j0, report.l0star, report.c**2
    i0, l0 = report.i0, report.l0
    if not (1 <= i0 and i0 + 4 * l0 <= n and l0 >= 1):
        return Verdict(False, f"coarse window [{i0},{i0 + 4 * l0}] outside 1..{n}")
    if not (j0 - ls >= 1 and j0 + ls <= n and j0 - report.m_bound >= 1):
        return Verdict(False, f"segment [{j0 - ls},{j0 + ls}] (m up to {report.m_bound}) outside 1..{n}")
    if ls < report.m_bound:
        return Verdict(False, f"l0star={ls} below n^(1-eps) bound {report.m_bound}")
    if report.m_bound != floor_power(n, 1 - report.eps):
        return Verdict(False, "m bound does not match floor(n^(1-eps))")
    t_lo = power_bounds(n, -report.tau)[0]
    keep = (1 - t_lo) ** 2

    def sq(i, j):
        return norms(interval_measure(walk, i, j, cap)).l2sq

    big = sq(i0, i0 + 4 * l0)
    for a, b in _sub_windows(i0, l0):
        if big < c2 * sq(a, b):
            return Verdict(False, f"coarse flatness fails against sub-window [{a},{b}]")
    mu_sq = sq(j0, j0 + ls)
    whole = sq(j0 - ls, j0 + ls)
    if whole < c2 * mu_sq:
        return Verdict(False, "first flatness inequality fails against mu")
    if whole < c2 * sq(j0 - ls, j0 - 1):
        return Verdict(False, "first flatness inequality fails against nu")
    for m in range(1, report.m_bound + 1):
        if sq(j0 - m, j0 + ls) < keep * mu_sq:
            return Verdict(False, f"second flatness inequality fails at m={m}")
    return Verdict(True)
