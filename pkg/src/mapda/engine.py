"""End-to-end delivery over a validated array: placement, per-slot uplink
precoding, identity downlink forwarding, and cache-aided decoding.

Each slot s serves the users whose columns contain s.  Served users upload
linear combinations of the slot's packets, restricted by the cache pattern:
user k_i may weight packet j only if it caches that packet's row.  The base
station forwards its received antenna signals unchanged; user k_l then sees
every packet j through a coefficient B(l, j) of the combined two-hop matrix
B = H* H V.  The precoder V is chosen column by column so that B has
a unit diagonal and zeros exactly where a user neither caches nor requests
a packet; everything else a user hears is in its cache and is subtracted.

The solver requires the array's caching redundancy t = K*Z/F to be at least
the antenna count L (equivalently K*Z >= L*F).  Below that density the
per-column systems of the supported regime are overdetermined and the
transmission is reported infeasible rather than attempted.

Scalar work runs on either backend of ``linalg``; exact-rational runs make
decode checks bit-exact.  Slots share no mutable state, so per-slot work
can run in any order (a delivery run here simply iterates them).
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import NamedTuple

from .arrays import STAR, DomainError, Mapda, ParseError
from .linalg import (
    EXACT,
    FLOAT,
    DimensionMismatch,
    Infeasible,
    Matrix,
    _tally,
    conj_transpose,
    count_ops,
    matmul,
    solve,
)

# Relative tolerance for float-backend decode checks; the exact backend
# demands equality.
DECODE_RTOL = 1e-6


class DegenerateChannel(Exception):
    """A channel submatrix that must be generic is singular."""

    def __init__(self, message, slot=None):
        super().__init__(message)
        self.slot = slot


class DecodeMismatch(Exception):
    """A recovered value disagrees with the library: a solver or model bug."""

    def __init__(self, message, slot=None):
        super().__init__(message)
        self.slot = slot


class PacketId(NamedTuple):
    file: int
    part: int


@dataclass(frozen=True)
class SlotGroup:
    """The users and packet rows sharing one slot id.

    ``served_users`` and ``served_rows`` are parallel, 1-based, in
    column-major order of the grid.  ``zero_sets[l]`` holds the 0-based
    positions j whose packet user k_l neither caches nor requests; those are
    exactly the positions that must vanish in row l of B.  ``cacher_sets[n]``
    holds the 0-based positions of users caching packet n's row: the only
    rows of column n of V allowed to be nonzero.  ``redundancy`` and
    ``antennas`` carry the parent array's t and L for the solver gate.
    """

    slot: int
    served_users: tuple
    served_rows: tuple
    zero_sets: tuple
    cacher_sets: tuple
    redundancy: Fraction
    antennas: int


@dataclass(frozen=True)
class SchemeInstance:
    """An array bound to a library size: placement plus all slot groups."""

    mapda: Mapda
    files: int
    memory_ratio: Fraction
    placement: tuple
    groups: tuple

    def cache_of(self, user):
        """The packet set cached by a 1-based user id."""
        return self.placement[user - 1]


@dataclass(frozen=True)
class ChannelMatrix:
    """An L x K matrix of channel gains with provenance for reproducibility."""

    matrix: Matrix
    provenance: str


@dataclass(frozen=True)
class PrecodingMatrix:
    """Per-slot uplink precoder; row i weights user k_i's transmission.

    ``combined`` caches the two-hop receive matrix B = H* H V so receivers
    (and repeated runs over demand vectors) need not recompute it.
    """

    slot: int
    matrix: Matrix
    combined: Matrix | None = None


@dataclass(frozen=True)
class SlotOutcome:
    slot: int
    recovered: tuple  # (user, PacketId, value) per served position
    residual_max: float
    ops: dict


@dataclass(frozen=True)
class SlotReport:
    s: int
    served: tuple
    feasible: bool
    residual_max: float


@dataclass(frozen=True)
class DeliveryReport:
    ndt_ul: Fraction
    ndt_dl: Fraction
    slots: tuple
    ops_measured: dict
    ops_model: Fraction
    recovered: dict

    def to_json_dict(self):
        model = self.ops_model
        return {
            "ndt_ul": str(self.ndt_ul),
            "ndt_dl": str(self.ndt_dl),
            "slots": [
                {
                    "s": r.s,
                    "served": list(r.served),
                    "feasible": r.feasible,
                    "residual_max": r.residual_max,
                }
                for r in self.slots
            ],
            "ops_measured": self.ops_measured,
            "ops_model": int(model) if model.denominator == 1 else str(model),
        }


def build_instance(m: Mapda, files: int) -> SchemeInstance:
    """Derive placement and slot groups from a validated array.

    User k caches packet (n, f) for every file n exactly when grid(f, k) is
    a star, so each user holds Z*N packets (Z/F of the library).
    """
    if files < 1:
        raise DomainError(f"library size must be >= 1, got {files}")
    grid = m.grid
    placement = tuple(
        frozenset(
            PacketId(n, f + 1)
            for f in range(m.rows)
            if grid[f][k] is STAR
            for n in range(1, files + 1)
        )
        for k in range(m.cols)
    )
    t = m.profile.t
    groups = []
    for s in range(1, m.slots + 1):
        cells = m.slot_cells(s)
        served_rows = tuple(f for f, _ in cells)
        served_users = tuple(k for _, k in cells)
        size = len(cells)
        zero_sets = tuple(
            frozenset(
                j
                for j in range(size)
                if j != l and grid[served_rows[j] - 1][served_users[l] - 1] is not STAR
            )
            for l in range(size)
        )
        cacher_sets = tuple(
            tuple(
                i
                for i in range(size)
                if grid[served_rows[n] - 1][served_users[i] - 1] is STAR
            )
            for n in range(size)
        )
        groups.append(
            SlotGroup(
                slot=s,
                served_users=served_users,
                served_rows=served_rows,
                zero_sets=zero_sets,
                cacher_sets=cacher_sets,
                redundancy=t,
                antennas=m.antennas,
            )
        )
    return SchemeInstance(
        mapda=m,
        files=files,
        memory_ratio=Fraction(m.stars_per_col, m.rows),
        placement=placement,
        groups=tuple(groups),
    )


def default_demands(users, files):
    """The reproducible default demand vector d_k = ((k-1) mod N) + 1."""
    return tuple((k - 1) % files + 1 for k in range(1, users + 1))


def _check_demands(demands, users, files):
    demands = tuple(demands)
    if len(demands) != users:
        raise DomainError(f"demand vector has length {len(demands)}, expected {users}")
    for d in demands:
        if not 1 <= d <= files:
            raise DomainError(f"demand {d} outside library [1..{files}]")
    return demands


def make_channel(antennas, users, seed=0) -> ChannelMatrix:
    """Draw an L x K float channel with i.i.d. standard-normal real and
    imaginary parts from a deterministic PRNG (same seed, same matrix)."""
    rng = random.Random(seed)
    rows = [
        [complex(rng.gauss(0.0, 1.0), rng.gauss(0.0, 1.0)) for _ in range(users)]
        for _ in range(antennas)
    ]
    return ChannelMatrix(Matrix.from_rows(rows, FLOAT), provenance=f"seeded-random({seed})")


def channel_from_matrix(matrix: Matrix) -> ChannelMatrix:
    return ChannelMatrix(matrix, provenance="fixture")


def _parse_scalar(token, line_no):
    """One fixture entry: rational 'p/q', integer, decimal, or 'a+bi'."""
    if "/" in token:
        num, _, den = token.partition("/")
        try:
            return Fraction(int(num), int(den))
        except (ValueError, ZeroDivisionError):
            raise ParseError(f"line {line_no}: bad rational {token!r}") from None
    if "i" in token or "j" in token:
        try:
            return complex(token.replace("i", "j"))
        except ValueError:
            raise ParseError(f"line {line_no}: bad complex literal {token!r}") from None
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"line {line_no}: bad scalar {token!r}") from None


def _parse_scalar_block(text, expect_header):
    lines = [
        (i + 1, line.strip())
        for i, line in enumerate(text.splitlines())
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if not lines:
        raise ParseError("empty fixture")
    header_no, header = lines[0]
    fields = header.split()
    if len(fields) != 2:
        raise ParseError(f"line {header_no}: header must be '{expect_header}', got {header!r}")
    try:
        n_rows, n_cols = int(fields[0]), int(fields[1])
    except ValueError:
        raise ParseError(f"line {header_no}: non-integer header field") from None
    body = lines[1:]
    if len(body) != n_rows:
        raise ParseError(f"header declares {n_rows} rows, found {len(body)}")
    rows = []
    for line_no, line in body:
        tokens = line.split()
        if len(tokens) != n_cols:
            raise ParseError(f"line {line_no}: expected {n_cols} entries, found {len(tokens)}")
        rows.append([_parse_scalar(tok, line_no) for tok in tokens])
    return rows


def parse_channel_fixture(text) -> ChannelMatrix:
    """Channel fixture: header 'L K' then L lines of K scalar entries."""
    rows = _parse_scalar_block(text, "L K")
    return channel_from_matrix(Matrix.from_rows(rows))


def read_channel_fixture(path) -> ChannelMatrix:
    return parse_channel_fixture(Path(path).read_text(encoding="utf-8"))


def parse_library_fixture(text) -> Matrix:
    """Library fixture: header 'N F' then N lines of F packet values."""
    rows = _parse_scalar_block(text, "N F")
    return Matrix.from_rows(rows)


def read_library_fixture(path) -> Matrix:
    return parse_library_fixture(Path(path).read_text(encoding="utf-8"))


def random_library(files, parts, seed=0, backend=EXACT) -> Matrix:
    """Deterministic random packet values, one scalar per (file, part)."""
    rng = random.Random(seed)
    if backend == EXACT:
        rows = [
            [Fraction(rng.randint(-99, 99), rng.randint(1, 9)) for _ in range(parts)]
            for _ in range(files)
        ]
    else:
        rows = [
            [complex(rng.gauss(0.0, 1.0), rng.gauss(0.0, 1.0)) for _ in range(parts)]
            for _ in range(files)
        ]
    return Matrix.from_rows(rows, backend)


def _channel_columns(channel: ChannelMatrix, group: SlotGroup) -> Matrix:
    h = channel.matrix
    if h.n_rows != group.antennas:
        raise DimensionMismatch(
            f"channel has {h.n_rows} rows but the array declares {group.antennas} antennas"
        )
    if h.n_cols < max(group.served_users):
        raise DimensionMismatch(
            f"channel has {h.n_cols} columns but slot {group.slot} serves user "
            f"{max(group.served_users)}"
        )
    return h.take(range(h.n_rows), [k - 1 for k in group.served_users])


def synthesize_precoder(group: SlotGroup, channel: ChannelMatrix, demands=None) -> PrecodingMatrix:
    """Choose the slot's uplink precoder V so B = H* H V decodes one-shot.

    Column n is solved from the reduced system over the cacher positions:
    B(n, n) = 1 plus B(l, n) = 0 for every served user l that does not cache
    packet n's row.  Requires the array redundancy gate t >= L; below it the
    supported regime offers no solution and Infeasible is raised.  A rank
    failure on a system a generic channel would solve raises
    DegenerateChannel instead.
    """
    if group.redundancy < group.antennas:
        raise Infeasible(
            f"slot {group.slot}: cache redundancy t={group.redundancy} is below the "
            f"antenna count L={group.antennas} (K*Z < L*F); the per-column systems "
            f"have t unknowns but up to L equations",
            slot=group.slot,
        )
    h_s = _channel_columns(channel, group)
    gram = matmul(conj_transpose(h_s), h_s)
    size = len(group.served_users)
    backend = gram.backend
    zero = Fraction(0) if backend == EXACT else complex(0)
    one = Fraction(1) if backend == EXACT else complex(1)
    v_rows = [[zero] * size for _ in range(size)]
    for n in range(size):
        unknowns = group.cacher_sets[n]
        eq_rows = (n,) + tuple(l for l in range(size) if n in group.zero_sets[l])
        rhs = Matrix.column([one] + [zero] * (len(eq_rows) - 1), backend)
        if not unknowns:
            raise Infeasible(
                f"slot {group.slot}: no served user caches packet position {n + 1}",
                slot=group.slot,
                column=n + 1,
            )
        a_sub = gram.take(eq_rows, unknowns)
        try:
            x = solve(a_sub, rhs)
        except Infeasible as exc:
            if len(eq_rows) <= min(group.antennas, len(unknowns)):
                raise DegenerateChannel(
                    f"slot {group.slot}: column {n + 1} system is rank-deficient although "
                    f"a generic channel would solve it",
                    slot=group.slot,
                ) from exc
            raise Infeasible(
                f"slot {group.slot}: column {n + 1} has {len(unknowns)} unknowns but "
                f"{len(eq_rows)} equations and no solution",
                slot=group.slot,
                column=n + 1,
            ) from exc
        for idx, i in enumerate(unknowns):
            v_rows[i][n] = x.at(idx, 0)
    v = Matrix.from_rows(v_rows, backend)
    return PrecodingMatrix(slot=group.slot, matrix=v, combined=matmul(gram, v))


def _residual(value):
    return abs(complex(value)) if not isinstance(value, Fraction) else float(abs(value))


def run_slot(group, channel, demands, library, precoder=None) -> SlotOutcome:
    """Execute one transmission: uplink combine, forward, decode.

    Packet values come from ``library`` (an N x F matrix of scalars).  Each
    served user subtracts its cached contributions using B recomputed from
    the shared channel and recovers its packet from the unit diagonal.
    Raises DecodeMismatch if a recovered value strays from the library.
    """
    demands = tuple(demands)
    if len(demands) < max(group.served_users):
        raise DomainError(
            f"demand vector covers {len(demands)} users but slot {group.slot} "
            f"serves user {max(group.served_users)}"
        )
    for d in demands:
        if not 1 <= d <= library.n_rows:
            raise DomainError(f"demand {d} outside library [1..{library.n_rows}]")
    ops = {}
    if precoder is None:
        with count_ops() as tally:
            precoder = synthesize_precoder(group, channel, demands)
        ops["precoder_synthesis"] = {"mul": tally.mul, "add": tally.add}
    else:
        ops["precoder_synthesis"] = {"mul": 0, "add": 0}
    v = precoder.matrix
    backend = v.backend
    h_s = _channel_columns(channel, group)
    size = len(group.served_users)
    w = Matrix.column(
        [
            library.at(demands[group.served_users[j] - 1] - 1, group.served_rows[j] - 1)
            for j in range(size)
        ],
        backend,
    )
    with count_ops() as tally:
        x = matmul(v, w)
    ops["uplink_encode"] = {"mul": tally.mul, "add": tally.add}
    with count_ops() as tally:
        y_bs = matmul(h_s, x)
    ops["bs_forward"] = {"mul": tally.mul, "add": tally.add}
    with count_ops() as tally:
        y_users = matmul(conj_transpose(h_s), y_bs)
        # Receivers recompute B deterministically from the shared channel
        # (or reuse the copy the synthesizer cached).
        b = precoder.combined
        if b is None:
            b = matmul(matmul(conj_transpose(h_s), h_s), v)
        recovered = []
        residual = 0.0
        for l in range(size):
            cached = [j for j in range(size) if j != l and j not in group.zero_sets[l]]
            heard = y_users.at(l, 0)
            for j in cached:
                heard -= b.at(l, j) * w.at(j, 0)
            value = heard / b.at(l, l)
            _tally(mul=len(cached) + 1, add=len(cached))
            expected = w.at(l, 0)
            if backend == EXACT:
                if value != expected:
                    raise DecodeMismatch(
                        f"slot {group.slot}: user {group.served_users[l]} recovered "
                        f"{value} != {expected}",
                        slot=group.slot,
                    )
            else:
                err = abs(value - expected)
                if err > DECODE_RTOL * max(1.0, abs(expected)):
                    raise DecodeMismatch(
                        f"slot {group.slot}: user {group.served_users[l]} decode error {err}",
                        slot=group.slot,
                    )
                residual = max(residual, err)
                residual = max(residual, _residual(b.at(l, l) - 1))
                for j in group.zero_sets[l]:
                    residual = max(residual, _residual(b.at(l, j)))
            user = group.served_users[l]
            packet = PacketId(demands[user - 1], group.served_rows[l])
            recovered.append((user, packet, value))
    ops["user_decode"] = {"mul": tally.mul, "add": tally.add}
    return SlotOutcome(
        slot=group.slot, recovered=tuple(recovered), residual_max=residual, ops=ops
    )


def _ops_model(instance: SchemeInstance) -> Fraction:
    """Closed-form per-slot cost r^3 + r^2 + t*r summed over slots.

    For regular arrays (every slot of size t+L) this is the analytical
    complexity ((t+L)^3 + (t+L)^2 + t(t+L)) * S.
    """
    t = instance.mapda.profile.t
    total = Fraction(0)
    for group in instance.groups:
        r = len(group.served_users)
        total += r**3 + r**2 + t * r
    return total


def run_delivery(instance, channel, demands, library, force=False, precoders=None) -> DeliveryReport:
    """Run all S slots and verify every user recovers its missing packets.

    Refuses arrays with t < L unless ``force`` is set (the forced run then
    reports the per-slot infeasibility).  Propagates Infeasible,
    DegenerateChannel, and DecodeMismatch with the offending slot id.
    """
    m = instance.mapda
    demands = _check_demands(demands, m.cols, instance.files)
    if not force and not m.profile.star_density_ok:
        raise Infeasible(
            f"array has t={m.profile.t} < L={m.antennas}; pass force=True to attempt anyway"
        )
    if library.n_rows != instance.files or library.n_cols != m.rows:
        raise DimensionMismatch(
            f"library is {library.n_rows}x{library.n_cols}, expected "
            f"{instance.files}x{m.rows}"
        )
    slot_reports = []
    ops_total: dict[str, dict[str, int]] = {}
    recovered: dict[int, set] = {k: set() for k in range(1, m.cols + 1)}
    recovered_cells = []
    for idx, group in enumerate(instance.groups):
        precoder = precoders[idx] if precoders is not None else None
        outcome = run_slot(group, channel, demands, library, precoder=precoder)
        for phase, tally in outcome.ops.items():
            agg = ops_total.setdefault(phase, {"mul": 0, "add": 0})
            agg["mul"] += tally["mul"]
            agg["add"] += tally["add"]
        for user, packet, _value in outcome.recovered:
            recovered[user].add(packet)
            recovered_cells.append((user, packet.part))
        slot_reports.append(
            SlotReport(
                s=group.slot,
                served=group.served_users,
                feasible=True,
                residual_max=outcome.residual_max,
            )
        )
    # Conservation: the recovered (user, row) cells are exactly the integer
    # cells of the grid, each delivered once.
    expected_cells = sorted(
        (k + 1, f + 1)
        for k in range(m.cols)
        for f in range(m.rows)
        if m.grid[f][k] is not STAR
    )
    if sorted(recovered_cells) != expected_cells:
        raise DecodeMismatch(
            "recovered cells do not match the integer cells of the array"
        )
    for k in range(1, m.cols + 1):
        expected = {
            PacketId(demands[k - 1], f + 1)
            for f in range(m.rows)
            if m.grid[f][k - 1] is not STAR
        }
        if recovered[k] != expected:
            raise DecodeMismatch(f"user {k} recovered {recovered[k]}, expected {expected}")
    ndt = Fraction(m.slots, m.rows)
    return DeliveryReport(
        ndt_ul=ndt,
        ndt_dl=ndt,
        slots=tuple(slot_reports),
        ops_measured=ops_total,
        ops_model=_ops_model(instance),
        recovered={k: frozenset(v) for k, v in recovered.items()},
    )
