import random
from fractions import Fraction

import pytest

from nalo import groups
from nalo.measure import Measure


def random_element(ctx, rng: random.Random):
    kind = ctx.kind
    if kind == "cyclic":
        return rng.randrange(ctx.param)
    if kind == "lattice":
        return tuple(rng.randint(-9, 9) for _ in range(ctx.param))
    if kind == "symmetric":
        img = list(range(ctx.param))
        rng.shuffle(img)
        return tuple(img)
    if kind == "heisenberg":
        return tuple(rng.randint(-6, 6) for _ in range(3))
    if kind == "integer-matrix":
        # products of elementary matrices and signed permutations stay in GL_m(Z)
        m = ctx.param
        g = ctx.identity()
        for _ in range(rng.randint(0, 4)):
            i, j = rng.sample(range(m), 2) if m > 1 else (0, 0)
            e = [[int(r == c) for c in range(m)] for r in range(m)]
            if i != j:
                e[i][j] = rng.choice([-2, -1, 1, 2])
            else:
                e[0][0] = -1
            g = ctx.mul(g, ctx.element(e))
        return g
    # rational-matrix-2: products of shears with rational entries
    g = ctx.identity()
    for _ in range(rng.randint(0, 3)):
        t = Fraction(rng.randint(-5, 5), rng.randint(1, 4))
        shear = [[1, t], [0, 1]] if rng.random() < 0.5 else [[1, 0], [t, 1]]
        g = ctx.mul(g, ctx.element(shear))
    return g


ALL_CONTEXTS = [
    groups.cyclic(12),
    groups.lattice(2),
    groups.symmetric(4),
    groups.heisenberg(),
    groups.integer_matrix(3),
    groups.rational_matrix_2(),
]


def random_measure(ctx, rng: random.Random, size=None, max_den=7):
    size = size or rng.randint(1, 5)
    atoms = {}
    for _ in range(size):
        atoms[random_element(ctx, rng)] = Fraction(rng.randint(1, max_den))
    tot = sum(atoms.values())
    return Measure(ctx, {g: w / tot for g, w in atoms.items()})


@pytest.fixture
def rng():
    return random.Random(20240611)
