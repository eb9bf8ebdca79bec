"""Placement delivery arrays for multi-antenna coded caching.

The central object is an F x K grid whose K columns stand for users and
whose F rows stand for packet indices.  A star at (f, k) means user k
caches packet f of every file; an integer s means user k receives packet
f during transmission slot s.  A grid declared with L antennas is accepted
when

  C1  every column holds the same number of stars,
  C2  every slot id from 1 up to the largest id present occurs somewhere,
  C3  no slot id repeats within a column,
  C4  for each slot s, inside the subgrid of rows and columns touching s,
      no row holds more than L integer entries.

This module provides validation, three generators (the classic t-subset
star pattern, horizontal replication, and a circulant construction),
profile derivation, and a plain-text file format.

All objects are immutable after construction; every function is pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from pathlib import Path

# A grid entry is either STAR (cached) or a positive slot id.
STAR = None


class DomainError(ValueError):
    """Parameters outside the range a generator or calculator is defined on."""


class RaggedGrid(ValueError):
    """Grid input is empty or not rectangular."""


class NonPositiveSlotId(ValueError):
    """Grid entry is neither STAR nor a positive integer."""


class ParseError(ValueError):
    """Malformed array file or token."""


class ValidationFailure(Exception):
    """Grid does not satisfy C1-C4 at the declared antenna count."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class ValidationReport:
    """Per-condition outcome of a validation run plus derived parameters.

    ``stars_per_col`` and ``t`` are None when C1 fails (they are undefined
    for columns with unequal star counts).  ``min_antennas`` is the smallest
    antenna count at which C4 would hold.  ``regular`` means every slot id
    occurs exactly t+L times, the shape the delivery proof relies on; it
    depends on the declared antenna count.
    """

    ok: bool
    rows: int
    cols: int
    antennas: int
    c1: bool
    c2: bool
    c3: bool
    c4: bool
    stars_per_col: int | None
    slots: int
    t: Fraction | None
    min_antennas: int
    regular: bool  # every slot id occurs exactly t+L times
    failures: tuple[str, ...]


@dataclass(frozen=True)
class MapdaProfile:
    """Derived scheme parameters of a valid array.

    ``t`` is the caching redundancy K*Z/F (how many users hold each packet),
    ``sum_dof`` is K(F-Z)/S, ``regular`` means every slot occurs exactly
    t+L times, and ``star_density_ok`` reports whether K*Z >= L*F, the
    precondition for the delivery engine (it never affects validity of the
    array itself).
    """

    t: Fraction
    sum_dof: Fraction
    regular: bool
    min_antennas: int
    star_density_ok: bool


def _normalize_grid(grid):
    """Return the grid as a tuple of row tuples, checking structure only."""
    rows = tuple(tuple(row) for row in grid)
    if not rows or not rows[0]:
        raise RaggedGrid("grid must have at least one row and one column")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise RaggedGrid(f"row {i + 1} has {len(row)} entries, expected {width}")
        for e in row:
            if e is STAR:
                continue
            if not isinstance(e, int) or isinstance(e, bool) or e < 1:
                raise NonPositiveSlotId(f"entry {e!r} in row {i + 1}: expected '*' or integer >= 1")
    return rows


def validate(grid, claimed_antennas):
    """Check conditions C1-C4 of an F x K grid at a declared antenna count.

    Returns a ValidationReport with one flag per condition and the derived
    parameters (Z, S, t, min_antennas, regularity).  The report passes
    overall iff C1-C4 all hold with L = claimed_antennas.

    Raises RaggedGrid or NonPositiveSlotId for structurally malformed input
    and DomainError for a non-positive antenna count; condition failures are
    reported, not raised.
    """
    rows = _normalize_grid(grid)
    if claimed_antennas < 1:
        raise DomainError(f"antenna count must be >= 1, got {claimed_antennas}")
    n_rows = len(rows)
    n_cols = len(rows[0])
    failures = []

    star_counts = [sum(1 for f in range(n_rows) if rows[f][k] is STAR) for k in range(n_cols)]
    c1 = len(set(star_counts)) == 1
    stars_per_col = star_counts[0] if c1 else None
    if not c1:
        failures.append(f"C1 violated: star counts per column are {star_counts}")

    occurrences: dict[int, int] = {}
    for row in rows:
        for e in row:
            if e is not STAR:
                occurrences[e] = occurrences.get(e, 0) + 1
    slots = max(occurrences) if occurrences else 0
    missing = [s for s in range(1, slots + 1) if s not in occurrences]
    c2 = not missing
    if not c2:
        failures.append(f"C2 violated: missing slot id(s) {missing}")

    c3 = True
    for k in range(n_cols):
        seen = set()
        for f in range(n_rows):
            e = rows[f][k]
            if e is STAR:
                continue
            if e in seen:
                c3 = False
                failures.append(f"C3 violated in column {k + 1}: slot {e} repeated")
                break
            seen.add(e)

    # C4: within each slot's subgrid, count integer entries per row.
    min_antennas = 0
    c4 = True
    for s in sorted(occurrences):
        slot_rows = [f for f in range(n_rows) if s in rows[f]]
        slot_cols = [k for k in range(n_cols) if any(rows[f][k] == s for f in range(n_rows))]
        worst = max(
            sum(1 for k in slot_cols if rows[f][k] is not STAR) for f in slot_rows
        )
        if worst > min_antennas:
            min_antennas = worst
        if worst > claimed_antennas and c4:
            c4 = False
            failures.append(f"C4 violated at s={s}")

    t = Fraction(n_cols * stars_per_col, n_rows) if c1 else None
    regular = c1 and all(
        count == t + claimed_antennas for count in occurrences.values()
    )
    ok = c1 and c2 and c3 and c4
    return ValidationReport(
        ok=ok,
        rows=n_rows,
        cols=n_cols,
        antennas=claimed_antennas,
        c1=c1,
        c2=c2,
        c3=c3,
        c4=c4,
        stars_per_col=stars_per_col,
        slots=slots,
        t=t,
        min_antennas=min_antennas,
        regular=regular,
        failures=tuple(failures),
    )


@dataclass(frozen=True)
class Mapda:
    """A validated F x K star/slot grid with a declared antenna count.

    Construction validates C1-C4 and raises ValidationFailure otherwise,
    so every Mapda instance in the program satisfies the conditions.
    """

    grid: tuple
    antennas: int

    def __post_init__(self):
        rows = _normalize_grid(self.grid)
        object.__setattr__(self, "grid", rows)
        report = validate(rows, self.antennas)
        if not report.ok:
            raise ValidationFailure("; ".join(report.failures), report)

    @property
    def rows(self) -> int:
        return len(self.grid)

    @property
    def cols(self) -> int:
        return len(self.grid[0])

    @property
    def stars_per_col(self) -> int:
        return sum(1 for f in range(self.rows) if self.grid[f][0] is STAR)

    @property
    def slots(self) -> int:
        ids = [e for row in self.grid for e in row if e is not STAR]
        return max(ids) if ids else 0

    def parameters(self):
        """The (L, K, F, Z, S) tuple of this array."""
        return (self.antennas, self.cols, self.rows, self.stars_per_col, self.slots)

    @property
    def profile(self) -> MapdaProfile:
        report = validate(self.grid, self.antennas)
        n_int = self.cols * (self.rows - self.stars_per_col)
        sum_dof = Fraction(n_int, report.slots) if report.slots else Fraction(0)
        return MapdaProfile(
            t=report.t,
            sum_dof=sum_dof,
            regular=report.regular,
            min_antennas=report.min_antennas,
            star_density_ok=self.cols * self.stars_per_col >= self.antennas * self.rows,
        )

    def slot_cells(self, s):
        """Cells (f, k), 1-based, holding slot id s, in column-major order."""
        return tuple(
            (f + 1, k + 1)
            for k in range(self.cols)
            for f in range(self.rows)
            if self.grid[f][k] == s
        )


def generate_mn_pda(users, cached):
    """Build the classic t-subset star pattern as a single-antenna array.

    Rows are indexed by the t-subsets of [1..users] in lexicographic order;
    entry (T, k) is a star iff k is in T, otherwise the 1-based lexicographic
    rank of the (t+1)-subset T + {k}.  The result is a
    (1, K, C(K,t), C(K-1,t-1), C(K,t+1)) array.
    """
    if not 1 <= cached < users:
        raise DomainError(f"need 1 <= t < K, got t={cached}, K={users}")
    t_subsets = list(combinations(range(1, users + 1), cached))
    rank = {
        sub: i + 1
        for i, sub in enumerate(combinations(range(1, users + 1), cached + 1))
    }
    grid = []
    for sub in t_subsets:
        members = set(sub)
        row = []
        for k in range(1, users + 1):
            if k in members:
                row.append(STAR)
            else:
                row.append(rank[tuple(sorted(members | {k}))])
        grid.append(tuple(row))
    return Mapda(tuple(grid), antennas=1)


def replicate(base, copies):
    """Concatenate ``copies`` horizontal copies of an array.

    The declared antenna count scales by ``copies``.  The concatenation is
    re-validated mechanically; if it fails C1-C4 at the scaled antenna
    count, ValidationFailure propagates and nothing is returned.
    """
    if copies < 1:
        raise DomainError(f"copies must be >= 1, got {copies}")
    grid = tuple(row * copies for row in base.grid)
    return Mapda(grid, antennas=base.antennas * copies)


def generate_cyclic(users, cached):
    """Build the circulant array with K rows and K-t slots on K-t antennas.

    Column k holds stars in rows k, k+1, ..., k+t-1 (mod K, 1-based); the
    remaining cells cycle through the slot ids.  The pattern is not taken on
    faith: the constructor validates C1-C4, and the expected
    (K-t, K, K, t, K-t) parameters and sum-DoF K are checked afterwards,
    failing loudly rather than returning an unverified array.
    """
    if not 1 <= cached < users:
        raise DomainError(f"need 1 <= t < K, got t={cached}, K={users}")
    k_users, t = users, cached
    grid = []
    for f in range(1, k_users + 1):
        row = []
        for k in range(1, k_users + 1):
            if (f - k) % k_users < t:
                row.append(STAR)
            else:
                row.append((f - k - t) % k_users + 1)
        grid.append(tuple(row))
    m = Mapda(tuple(grid), antennas=k_users - t)
    expected = (k_users - t, k_users, k_users, t, k_users - t)
    if m.parameters() != expected or m.profile.sum_dof != k_users:
        raise ValidationFailure(
            f"circulant pattern produced {m.parameters()} with sum-DoF "
            f"{m.profile.sum_dof}, expected {expected} with sum-DoF {k_users}"
        )
    return m


# ---------------------------------------------------------------------------
# File format: header "L K F Z S" (Z and S may be "-" meaning derive),
# then F lines of K tokens, each "*" or a positive decimal integer.
# Lines starting with "#" are comments.

def format_mapda(m) -> str:
    lines = [f"{m.antennas} {m.cols} {m.rows} {m.stars_per_col} {m.slots}"]
    for row in m.grid:
        lines.append(" ".join("*" if e is STAR else str(e) for e in row))
    return "\n".join(lines) + "\n"


def _parse_entry(token, line_no):
    if token == "*":
        return STAR
    try:
        value = int(token)
    except ValueError:
        raise ParseError(f"line {line_no}: bad entry {token!r}") from None
    if value < 1:
        raise ParseError(f"line {line_no}: slot ids start at 1, got {value}")
    return value


def parse_mapda(text: str):
    """Parse the text form of an array, validating before returning."""
    lines = [
        (i + 1, line.strip())
        for i, line in enumerate(text.splitlines())
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if not lines:
        raise ParseError("empty input")
    header_no, header = lines[0]
    fields = header.split()
    if len(fields) != 5:
        raise ParseError(f"line {header_no}: header must be 'L K F Z S', got {header!r}")
    try:
        antennas, n_cols, n_rows = (int(fields[i]) for i in range(3))
        declared_z = None if fields[3] == "-" else int(fields[3])
        declared_s = None if fields[4] == "-" else int(fields[4])
    except ValueError:
        raise ParseError(f"line {header_no}: non-integer header field in {header!r}") from None
    body = lines[1:]
    if len(body) != n_rows:
        raise ParseError(f"header declares {n_rows} rows, found {len(body)}")
    grid = []
    for line_no, line in body:
        tokens = line.split()
        if len(tokens) != n_cols:
            raise ParseError(f"line {line_no}: expected {n_cols} entries, found {len(tokens)}")
        grid.append(tuple(_parse_entry(tok, line_no) for tok in tokens))
    try:
        m = Mapda(tuple(grid), antennas=antennas)
    except (RaggedGrid, NonPositiveSlotId) as exc:
        raise ParseError(str(exc)) from exc
    except DomainError as exc:
        raise ParseError(f"line {header_no}: {exc}") from exc
    if declared_z is not None and declared_z != m.stars_per_col:
        raise ValidationFailure(f"header declares Z={declared_z} but grid has Z={m.stars_per_col}")
    if declared_s is not None and declared_s != m.slots:
        raise ValidationFailure(f"header declares S={declared_s} but grid has S={m.slots}")
    return m


def read_mapda(path):
    return parse_mapda(Path(path).read_text(encoding="utf-8"))


def write_mapda(m, path):
    Path(path).write_text(format_mapda(m), encoding="utf-8")
