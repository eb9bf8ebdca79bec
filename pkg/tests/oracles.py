"""Independent oracles for the test suite.

Everything here is written from the definitions, separately from the
package code paths it checks: a naive condition checker, an exact channel
whose submatrices are provably nonsingular, and a brute-force enumerator
of small deliverable grids.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations, combinations_with_replacement, islice, permutations

import numpy as np

from mapda.linalg import Matrix


def naive_conditions(grid, antennas):
    """Recheck C1-C4 by direct transcription of the definitions.

    Returns (c1, c2, c3, c4).  Grid entries are None for stars, ints for
    slot ids; structural validity is assumed.
    """
    n_rows = len(grid)
    n_cols = len(grid[0])
    counts = []
    for k in range(n_cols):
        counts.append(sum(1 for f in range(n_rows) if grid[f][k] is None))
    c1 = all(c == counts[0] for c in counts)

    ids = sorted({grid[f][k] for f in range(n_rows) for k in range(n_cols) if grid[f][k] is not None})
    top = max(ids) if ids else 0
    c2 = ids == list(range(1, top + 1))

    c3 = True
    for k in range(n_cols):
        seen = [grid[f][k] for f in range(n_rows) if grid[f][k] is not None]
        if len(seen) != len(set(seen)):
            c3 = False

    c4 = True
    for s in range(1, top + 1):
        cells = [(f, k) for f in range(n_rows) for k in range(n_cols) if grid[f][k] == s]
        if not cells:
            continue
        sub_rows = sorted({f for f, _ in cells})
        sub_cols = sorted({k for _, k in cells})
        for f in sub_rows:
            fanin = sum(1 for k in sub_cols if grid[f][k] is not None)
            if fanin > antennas:
                c4 = False
    return c1, c2, c3, c4


def vandermonde_channel(antennas, users, first_node=2) -> Matrix:
    """Exact L x K channel h[l, k] = node_k ** l with distinct positive nodes.

    Such a matrix is totally positive, so every square submatrix is
    nonsingular: a provably generic channel for exact-arithmetic runs.
    """
    nodes = [Fraction(first_node + k) for k in range(users)]
    return Matrix.from_rows([[node**l for node in nodes] for l in range(antennas)])


# ---------------------------------------------------------------------------
# Brute-force enumeration of small deliverable grids.
#
# Grids are enumerated as multisets of columns (column order never affects
# conditions C1-C4 nor decodability for all demand vectors), then reduced
# by a sound isomorphism key (row sort, column sort, slot relabelling -- all
# delivery-preserving transformations).  Entries use 0 for stars.


def _columns(height, stars, max_s):
    cols = []
    for star_pos in combinations(range(height), stars):
        star_set = set(star_pos)
        frees = [i for i in range(height) if i not in star_set]
        for vals in permutations(range(1, max_s + 1), height - stars):
            col = [0] * height
            for pos, v in zip(frees, vals):
                col[pos] = v
            cols.append(col)
    return np.array(cols, dtype=np.int8)


def _index_batches(n_cols, width, batch=200_000):
    it = combinations_with_replacement(range(n_cols), width)
    while True:
        chunk = list(islice(it, batch))
        if not chunk:
            return
        yield np.array(chunk, dtype=np.int32)


def _filter(grids, n_cols, n_rows, stars, max_s):
    """Keep grids passing C2 with min-antennas >= 1 and K*Z >= F*min_antennas.

    C1 and C3 hold by construction of the column set.  Returns the boolean
    mask and the per-grid minimal antenna count.
    """
    s_max = grids.max(axis=(1, 2))
    ok = np.ones(len(grids), dtype=bool)
    for v in range(1, max_s + 1):
        ok &= (grids == v).any(axis=(1, 2)) | (s_max < v)
    ints = grids > 0
    min_ant = np.zeros(len(grids), dtype=np.int16)
    for s in range(1, max_s + 1):
        cell = grids == s
        rows_with_s = cell.any(axis=2)
        cols_with_s = cell.any(axis=1)
        fanin = (ints & cols_with_s[:, None, :]).sum(axis=2, dtype=np.int16)
        fanin = np.where(rows_with_s, fanin, 0)
        min_ant = np.maximum(min_ant, fanin.max(axis=1))
    ok &= min_ant >= 1
    ok &= n_cols * stars >= n_rows * min_ant
    return ok, min_ant


def _relabel(rows):
    mapping = {}
    out = []
    for row in rows:
        new_row = []
        for e in row:
            if e == 0:
                new_row.append(0)
            else:
                if e not in mapping:
                    mapping[e] = len(mapping) + 1
                new_row.append(mapping[e])
        out.append(new_row)
    return out


def canonical_key(grid_rows):
    """A delivery-invariant key: equal keys imply isomorphic grids.

    Alternates row sorting, slot relabelling, and column sorting to a
    fixpoint (or a small cap); every step is an isomorphism, so deduping by
    this key only ever merges genuinely isomorphic grids.
    """
    g = [list(r) for r in grid_rows]
    for _ in range(8):
        before = g
        g = _relabel(sorted(g))
        g = _relabel([list(r) for r in zip(*sorted(zip(*g)))])
        if g == before:
            break
    return tuple(tuple(r) for r in g)


def orbit_keys(grid_rows):
    """Keys of every row/column/slot-relabel transform of a grid.

    ``canonical_key`` is deduplication-sound but path dependent, so testing
    whether a class was enumerated requires intersecting over its whole
    orbit.  Grids here are small enough to brute-force it.
    """
    n_rows, n_cols = len(grid_rows), len(grid_rows[0])
    ids = sorted({e for row in grid_rows for e in row if e})
    keys = set()
    for row_perm in permutations(range(n_rows)):
        arranged = [grid_rows[i] for i in row_perm]
        for col_perm in permutations(range(n_cols)):
            g = [[row[j] for j in col_perm] for row in arranged]
            for relabeling in permutations(ids):
                mapping = dict(zip(ids, relabeling))
                keys.add(
                    canonical_key(
                        [[0 if e == 0 else mapping[e] for e in row] for row in g]
                    )
                )
    return keys


def enumerate_deliverable_grids(max_rows=4, max_cols=4, max_s=4):
    """All small grids passing C1-C4 at some antenna count L <= t.

    Yields (grid, min_antennas) with grid rows as tuples over {0, 1..S},
    one representative per isomorphism key.  All-star grids (S = 0, nothing
    to deliver) are excluded.
    """
    seen = set()
    out = []
    for n_rows in range(1, max_rows + 1):
        for n_cols in range(1, max_cols + 1):
            z_lo = max(1, -(-n_rows // n_cols))  # K*Z >= F needs Z >= ceil(F/K)
            for stars in range(z_lo, n_rows):
                cols = _columns(n_rows, stars, max_s)
                for idx in _index_batches(len(cols), n_cols):
                    grids = cols[idx].transpose(0, 2, 1)  # (batch, F, K)
                    ok, min_ant = _filter(grids, n_cols, n_rows, stars, max_s)
                    for g, ma in zip(grids[ok], min_ant[ok]):
                        key = canonical_key(g.tolist())
                        if key not in seen:
                            seen.add(key)
                            out.append((key, int(ma)))
    return out
