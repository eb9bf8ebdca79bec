"""Dense matrices over two interchangeable scalar fields.

The exact backend stores arbitrary-precision rationals (fractions.Fraction)
and produces bit-exact results; the float backend stores complex doubles.
A single computation never mixes backends.  The operations are the minimum
needed for per-slot precoder systems: multiply, conjugate transpose, rank,
and a Gaussian-elimination solver that zeroes free variables and reports
inconsistency instead of guessing.

Scalar multiply/add counts can be observed through ``count_ops``; counting
state is thread-local, keeping the operations re-entrant.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from fractions import Fraction

EXACT = "exact"
FLOAT = "float"

# Relative pivot threshold for the float backend (the exact backend tests
# pivots against literal zero).
PIVOT_RTOL = 1e-9


class DimensionMismatch(ValueError):
    """Operand shapes are incompatible."""


class BackendMismatch(TypeError):
    """Operands use different scalar backends, or a scalar does not fit one."""


class Infeasible(Exception):
    """A linear system has no solution (rank(A) < rank(A|b)).

    The delivery engine reuses this to signal transmissions whose precoder
    cannot exist; ``slot`` and ``column`` carry that context when known.
    """

    def __init__(self, message, slot=None, column=None):
        super().__init__(message)
        self.slot = slot
        self.column = column


@dataclass
class OpTally:
    mul: int = 0
    add: int = 0


_ACTIVE = threading.local()


@contextmanager
def count_ops():
    """Collect scalar multiply/add counts of operations run in this thread."""
    tally = OpTally()
    previous = getattr(_ACTIVE, "tally", None)
    _ACTIVE.tally = tally
    try:
        yield tally
    finally:
        _ACTIVE.tally = previous


def _tally(mul=0, add=0):
    tally = getattr(_ACTIVE, "tally", None)
    if tally is not None:
        tally.mul += mul
        tally.add += add


def _coerce(value, backend):
    if backend == EXACT:
        if isinstance(value, Fraction):
            return value
        if isinstance(value, int) and not isinstance(value, bool):
            return Fraction(value)
        raise BackendMismatch(f"exact backend cannot hold {value!r}")
    if backend == FLOAT:
        if isinstance(value, (int, float, complex, Fraction)):
            return complex(value)
        raise BackendMismatch(f"float backend cannot hold {value!r}")
    raise BackendMismatch(f"unknown backend {backend!r}")


def _zero(backend):
    return Fraction(0) if backend == EXACT else complex(0)


def _one(backend):
    return Fraction(1) if backend == EXACT else complex(1)


class Matrix:
    """Immutable row-major dense matrix bound to one scalar backend."""

    __slots__ = ("n_rows", "n_cols", "data", "backend")

    def __init__(self, n_rows, n_cols, data, backend):
        if n_rows < 1 or n_cols < 1:
            raise DimensionMismatch("matrix dimensions must be positive")
        data = tuple(data)
        if len(data) != n_rows * n_cols:
            raise DimensionMismatch(
                f"{n_rows}x{n_cols} matrix needs {n_rows * n_cols} entries, got {len(data)}"
            )
        self.n_rows = n_rows
        self.n_cols = n_cols
        self.data = data
        self.backend = backend

    @classmethod
    def from_rows(cls, rows, backend=None):
        """Build from an iterable of rows, inferring the backend if omitted.

        Inference picks exact when every entry is an int or Fraction, float
        otherwise.
        """
        rows = [list(r) for r in rows]
        if not rows or not rows[0]:
            raise DimensionMismatch("matrix must be nonempty")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise DimensionMismatch("rows have unequal lengths")
        flat = [e for r in rows for e in r]
        if backend is None:
            backend = (
                EXACT
                if all(isinstance(e, (int, Fraction)) and not isinstance(e, bool) for e in flat)
                else FLOAT
            )
        return cls(len(rows), width, (_coerce(e, backend) for e in flat), backend)

    @classmethod
    def identity(cls, n, backend=EXACT):
        one, zero = _one(backend), _zero(backend)
        return cls(n, n, (one if i == j else zero for i in range(n) for j in range(n)), backend)

    @classmethod
    def column(cls, values, backend=None):
        return cls.from_rows([[v] for v in values], backend)

    def at(self, i, j):
        return self.data[i * self.n_cols + j]

    def row(self, i):
        return self.data[i * self.n_cols : (i + 1) * self.n_cols]

    def col(self, j):
        return tuple(self.data[i * self.n_cols + j] for i in range(self.n_rows))

    def to_rows(self):
        return [list(self.row(i)) for i in range(self.n_rows)]

    def take(self, row_idx, col_idx):
        """Submatrix from the given row and column index sequences."""
        return Matrix(
            len(row_idx),
            len(col_idx),
            (self.at(i, j) for i in row_idx for j in col_idx),
            self.backend,
        )

    def __eq__(self, other):
        return (
            isinstance(other, Matrix)
            and self.backend == other.backend
            and self.n_rows == other.n_rows
            and self.n_cols == other.n_cols
            and self.data == other.data
        )

    def __hash__(self):
        return hash((self.n_rows, self.n_cols, self.data, self.backend))

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Matrix({self.n_rows}x{self.n_cols}, {self.backend})"


def _check_same_backend(a, b):
    if a.backend != b.backend:
        raise BackendMismatch(f"mixed backends: {a.backend} and {b.backend}")


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product; exact for rationals, IEEE double for floats."""
    _check_same_backend(a, b)
    if a.n_cols != b.n_rows:
        raise DimensionMismatch(f"cannot multiply {a.n_rows}x{a.n_cols} by {b.n_rows}x{b.n_cols}")
    out = []
    for i in range(a.n_rows):
        row = a.row(i)
        for j in range(b.n_cols):
            col = b.col(j)
            acc = row[0] * col[0]
            for x, y in zip(row[1:], col[1:]):
                acc += x * y
            out.append(acc)
    _tally(mul=a.n_rows * b.n_cols * a.n_cols, add=a.n_rows * b.n_cols * (a.n_cols - 1))
    return Matrix(a.n_rows, b.n_cols, out, a.backend)


def conj_transpose(a: Matrix) -> Matrix:
    """Hermitian transpose; plain transpose on the exact (real) backend."""
    if a.backend == EXACT:
        data = (a.at(i, j) for j in range(a.n_cols) for i in range(a.n_rows))
    else:
        data = (a.at(i, j).conjugate() for j in range(a.n_cols) for i in range(a.n_rows))
    return Matrix(a.n_cols, a.n_rows, data, a.backend)


def _is_zero(value, tol):
    if isinstance(value, Fraction):
        return value == 0
    return abs(value) <= tol


def _eliminate(rows, n_sys_cols, backend, tol):
    """In-place forward elimination; returns pivot (row, col) pairs.

    Only the first ``n_sys_cols`` columns are eligible as pivots; trailing
    columns ride along as right-hand sides.
    """
    pivots = []
    pivot_row = 0
    width = len(rows[0]) if rows else 0
    for col in range(n_sys_cols):
        if pivot_row >= len(rows):
            break
        if backend == FLOAT:
            best = max(range(pivot_row, len(rows)), key=lambda r: abs(rows[r][col]))
        else:
            best = next(
                (r for r in range(pivot_row, len(rows)) if rows[r][col] != 0), None
            )
            if best is None:
                continue
        if _is_zero(rows[best][col], tol):
            continue
        if best != pivot_row:
            rows[best], rows[pivot_row] = rows[pivot_row], rows[best]
        pivot = rows[pivot_row][col]
        for r in range(pivot_row + 1, len(rows)):
            factor = rows[r][col] / pivot
            if _is_zero(factor, 0 if backend == EXACT else 0.0):
                continue
            _tally(mul=width - col + 1, add=width - col)
            rows[r][col] = _zero(backend)
            for c in range(col + 1, width):
                rows[r][c] -= factor * rows[pivot_row][c]
        pivots.append((pivot_row, col))
        pivot_row += 1
    return pivots


def _scale(entries):
    return max((abs(e) for e in entries), default=0.0)


def rank(a: Matrix) -> int:
    """Row rank; exact for rationals, thresholded pivots for floats."""
    tol = 0 if a.backend == EXACT else PIVOT_RTOL * _scale(a.data)
    rows = a.to_rows()
    return len(_eliminate(rows, a.n_cols, a.backend, tol))


def solve(a: Matrix, b: Matrix) -> Matrix:
    """Solve a*x = b, returning the solution with free variables set to zero.

    Raises Infeasible when the system is inconsistent
    (rank(a) < rank(a|b)); exact on the rational backend, Gaussian
    elimination with partial pivoting on floats.
    """
    _check_same_backend(a, b)
    if a.n_rows != b.n_rows:
        raise DimensionMismatch(f"a has {a.n_rows} rows but b has {b.n_rows}")
    backend = a.backend
    tol = 0 if backend == EXACT else PIVOT_RTOL * max(_scale(a.data), _scale(b.data))
    rows = [list(a.row(i)) + list(b.row(i)) for i in range(a.n_rows)]
    pivots = _eliminate(rows, a.n_cols, backend, tol)
    pivot_rows = {r for r, _ in pivots}
    for r in range(a.n_rows):
        if r in pivot_rows:
            continue
        if any(not _is_zero(rows[r][a.n_cols + j], tol) for j in range(b.n_cols)):
            raise Infeasible("system is inconsistent: rank(A) < rank(A|b)")
    zero = _zero(backend)
    x = [[zero] * b.n_cols for _ in range(a.n_cols)]
    for r, c in reversed(pivots):
        for j in range(b.n_cols):
            acc = rows[r][a.n_cols + j]
            for c2 in range(c + 1, a.n_cols):
                acc -= rows[r][c2] * x[c2][j]
            x[c][j] = acc / rows[r][c]
            _tally(mul=a.n_cols - c, add=a.n_cols - c - 1)
    return Matrix.from_rows(x, backend)
