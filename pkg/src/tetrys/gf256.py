"""Arithmetic over GF(2^8) with the reduction polynomial x^8 + x^4 + x^3 + x^2 + 1.

Scalar ops work on Python ints in [0, 255]. The bulk helpers (``axpy``,
``scale``, ``combine``) operate on ``numpy.uint8`` buffers through a full
256x256 product table, so callers never loop byte by byte.
"""

import numpy as np

POLY = 0x11D
GENERATOR = 0x02


def _build_tables():
    exp = [0] * 512
    log = [0] * 256
    x = 1
    for i in range(255):
        exp[i] = x
        log[x] = i
        x <<= 1
        if x & 0x100:
            x ^= POLY
    for i in range(255, 512):
        exp[i] = exp[i - 255]
    return exp, log


EXP, LOG = _build_tables()

INV = [0] * 256
for _a in range(1, 256):
    INV[_a] = EXP[255 - LOG[_a]]
del _a

MUL_TABLE = np.zeros((256, 256), dtype=np.uint8)
for _a in range(1, 256):
    for _b in range(1, 256):
        MUL_TABLE[_a, _b] = EXP[LOG[_a] + LOG[_b]]
del _a, _b
MUL_TABLE.setflags(write=False)


def add(a, b):
    return a ^ b


sub = add


def mul(a, b):
    if a == 0 or b == 0:
        return 0
    return EXP[LOG[a] + LOG[b]]


def inv(a):
    if a == 0:
        raise ZeroDivisionError("0 has no multiplicative inverse in GF(256)")
    return INV[a]


def div(a, b):
    if b == 0:
        raise ZeroDivisionError("division by zero in GF(256)")
    if a == 0:
        return 0
    return EXP[LOG[a] + 255 - LOG[b]]


def scale(c, buf):
    """Return ``c * buf`` element-wise."""
    return MUL_TABLE[c][buf]


def axpy(c, x, y):
    """In place ``y ^= c * x``; ``x`` and ``y`` are equal-length uint8 arrays."""
    if c == 0:
        return y
    if c == 1:
        np.bitwise_xor(y, x, out=y)
    else:
        np.bitwise_xor(y, MUL_TABLE[c][x], out=y)
    return y


def combine(coeffs, rows):
    """Linear combination ``sum_l coeffs[l] * rows[l]`` of a 2-D uint8 array."""
    rows = np.asarray(rows, dtype=np.uint8)
    coeffs = np.asarray(coeffs, dtype=np.uint8)
    if rows.shape[0] == 0:
        return np.zeros(rows.shape[1:], dtype=np.uint8)
    return np.bitwise_xor.reduce(MUL_TABLE[coeffs[:, None], rows], axis=0)


def mat_inv(m):
    """Invert a square matrix given as a list of int lists (Gauss-Jordan).

    Raises ``ValueError`` when the matrix is singular.
    """
    n = len(m)
    a = [list(row) + [1 if i == j else 0 for j in range(n)] for i, row in enumerate(m)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if a[r][col]), None)
        if pivot is None:
            raise ValueError("singular matrix")
        a[col], a[pivot] = a[pivot], a[col]
        f = INV[a[col][col]]
        a[col] = [mul(f, v) for v in a[col]]
        for r in range(n):
            if r != col and a[r][col]:
                c = a[r][col]
                a[r] = [v ^ mul(c, w) for v, w in zip(a[r], a[col])]
    return [row[n:] for row in a]
