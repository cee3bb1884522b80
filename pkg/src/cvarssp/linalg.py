"""Sparse linear solves in exact rational or floating-point arithmetic."""

from __future__ import annotations

from fractions import Fraction

import gmpy2
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import spsolve

mpq = gmpy2.mpq


def to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(int(x.numerator), int(x.denominator))


class SingularSystem(ArithmeticError):
    pass


def solve_sparse_exact(rows: list[dict[int, object]], rhs: list[object]) -> list[Fraction]:
    """Solve ``A x = b`` exactly; ``rows[i]`` maps column -> coefficient of row i."""
    return [to_fraction(v) for v in solve_sparse_mpq(rows, rhs)]


def solve_sparse_mpq(rows: list[dict[int, object]], rhs: list[object]) -> list:
    """Exact sparse solve returning gmpy2 rationals.

    Gaussian elimination on dict rows with pivots chosen by smallest row length,
    which keeps fill-in low for the near-triangular systems policy evaluation gives.
    """
    n = len(rows)
    work = [{j: mpq(v) for j, v in r.items() if v} for r in rows]
    b = [mpq(v) for v in rhs]
    col_rows: dict[int, set[int]] = {}
    for i, r in enumerate(work):
        for j in r:
            col_rows.setdefault(j, set()).add(i)
    order: list[tuple[int, int]] = []
    active = set(range(n))
    while active:
        i = min(active, key=lambda k: (len(work[k]), k))
        row = work[i]
        if not row:
            raise SingularSystem("singular system")
        j = min(row, key=lambda c: (len(col_rows[c]), c))
        active.discard(i)
        piv = row[j]
        for k in list(col_rows[j]):
            if k == i or k not in active:
                continue
            other = work[k]
            f = other[j] / piv
            for c, v in row.items():
                nv = other.get(c, 0) - f * v
                if nv:
                    if c not in other:
                        col_rows[c].add(k)
                    other[c] = nv
                else:
                    if c in other:
                        del other[c]
                        col_rows[c].discard(k)
            b[k] -= f * b[i]
        for c in row:
            col_rows[c].discard(i)
        order.append((i, j))
    x = [mpq(0)] * n
    for i, j in reversed(order):
        row = work[i]
        acc = b[i]
        for c, v in row.items():
            if c != j:
                acc -= v * x[c]
        x[j] = acc / row[j]
    return x


def solve_sparse_float(rows: list[dict[int, float]], rhs: list[float]) -> list[float]:
    n = len(rows)
    data, ri, ci = [], [], []
    for i, r in enumerate(rows):
        for j, v in r.items():
            ri.append(i)
            ci.append(j)
            data.append(float(v))
    a = csr_matrix((data, (ri, ci)), shape=(n, n))
    x = spsolve(a.tocsc(), np.asarray(rhs, dtype=float))
    x = np.atleast_1d(x)
    if not np.all(np.isfinite(x)):
        raise SingularSystem("singular system")
    return [float(v) for v in x]


def solve_sparse(rows, rhs, exact: bool):
    return solve_sparse_exact(rows, rhs) if exact else solve_sparse_float(rows, rhs)
