"""Command line frontend: validate / gen / simulate / compare / sweep.

Exit codes are stable across commands: 0 success, 1 domain error or
infeasibility, 2 I/O or parse failure.  Output is deterministic for a
fixed configuration and seed; the MAPDA_SEED environment variable
overrides --seed.  ``gen`` writes the array file format on stdout so
commands compose through pipes.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import arrays, engine, metrics
from .arrays import DomainError, ParseError, ValidationFailure
from .linalg import (
    EXACT,
    FLOAT,
    BackendMismatch,
    DimensionMismatch,
    Infeasible,
    Matrix,
)
from .metrics import ConstraintViolation, SystemPoint

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_IO = 2


def _effective_seed(args):
    env = os.environ.get("MAPDA_SEED")
    if env is not None:
        return int(env)
    return args.seed


def _read_text(path):
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def _write_text(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_validate(args) -> int:
    report = arrays.validate(_grid_from_file(args.file), args.antennas)
    lines = []
    if report.ok:
        z = report.stars_per_col
        sum_dof = Fraction(report.cols * (report.rows - z), report.slots) if report.slots else Fraction(0)
        lines.append(
            f"({report.antennas},{report.cols},{report.rows},{z},{report.slots}) MAPDA, "
            f"t={report.t}, sum-DoF={sum_dof}"
        )
    for cond, okflag in (("C1", report.c1), ("C2", report.c2), ("C3", report.c3), ("C4", report.c4)):
        lines.append(f"{cond}: {'pass' if okflag else 'FAIL'}")
    lines.append(f"min antennas: {report.min_antennas}")
    lines.append(f"regular: {'yes' if report.regular else 'no'}")
    for failure in report.failures:
        lines.append(failure)
    print("\n".join(lines))
    return EXIT_OK if report.ok else EXIT_DOMAIN


def _grid_from_file(path):
    """Raw grid of a file without enforcing C1-C4 (validate reports those)."""
    text = _read_text(path)
    lines = [
        (i + 1, line.strip())
        for i, line in enumerate(text.splitlines())
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if not lines:
        raise ParseError("empty input")
    body = lines[1:]
    if not body:
        raise ParseError("missing grid rows")
    grid = []
    for line_no, line in body:
        row = []
        for token in line.split():
            if token == "*":
                row.append(arrays.STAR)
            else:
                try:
                    value = int(token)
                except ValueError:
                    raise ParseError(f"line {line_no}: bad entry {token!r}") from None
                if value < 1:
                    raise ParseError(f"line {line_no}: slot ids start at 1, got {value}")
                row.append(value)
        grid.append(tuple(row))
    return tuple(grid)


def cmd_gen(args) -> int:
    if args.generator == "mn":
        m = arrays.generate_mn_pda(args.users, args.t)
    elif args.generator == "cyclic":
        m = arrays.generate_cyclic(args.users, args.t)
    elif args.generator == "replicate":
        base = arrays.parse_mapda(_read_text(args.input))
        m = arrays.replicate(base, args.copies)
    else:  # pragma: no cover - argparse restricts choices
        raise DomainError(f"unknown generator {args.generator}")
    _write_text(args.out, arrays.format_mapda(m))
    profile = m.profile
    print(
        f"{m.parameters()} MAPDA, t={profile.t}, sum-DoF={profile.sum_dof}, "
        f"regular={'yes' if profile.regular else 'no'}, min-antennas={profile.min_antennas}",
        file=sys.stderr,
    )
    return EXIT_OK


def _parse_demands(spec, users, files, rng):
    if spec is None:
        return engine.default_demands(users, files)
    if spec == "random":
        return tuple(rng.randint(1, files) for _ in range(users))
    try:
        demands = tuple(int(tok) for tok in spec.split(","))
    except ValueError:
        raise ParseError(f"bad demand list {spec!r}") from None
    return demands


def cmd_simulate(args) -> int:
    import random as _random

    m = arrays.parse_mapda(_read_text(args.file))
    seed = _effective_seed(args)
    rng = _random.Random(seed)

    fixture = None
    if args.channel is not None:
        fixture = engine.read_channel_fixture(args.channel)

    backend = args.scalar
    if backend == "auto":
        backend = EXACT if fixture is not None and fixture.matrix.backend == EXACT else FLOAT
    if backend == EXACT and fixture is None:
        raise DomainError("exact backend needs a rational channel fixture (--channel)")
    if backend == EXACT and fixture.matrix.backend != EXACT:
        raise DomainError("channel fixture holds floats; cannot run the exact backend")

    instance = engine.build_instance(m, args.files)
    demands = _parse_demands(args.demands, m.cols, args.files, rng)

    if args.library is not None:
        library = engine.read_library_fixture(args.library)
        if backend == FLOAT and library.backend == EXACT:
            library = Matrix.from_rows(library.to_rows(), FLOAT)
        if backend == EXACT and library.backend != EXACT:
            raise DomainError("library fixture holds floats; cannot run the exact backend")
    else:
        library = engine.random_library(args.files, m.rows, seed=rng.randint(0, 2**31), backend=backend)

    attempts = 4 if fixture is None else 1
    last_error = None
    for attempt in range(attempts):
        if fixture is not None:
            channel = fixture
            if backend == FLOAT and channel.matrix.backend == EXACT:
                channel = engine.channel_from_matrix(
                    Matrix.from_rows(channel.matrix.to_rows(), FLOAT)
                )
        else:
            channel = engine.make_channel(m.antennas, m.cols, seed=seed + attempt)
        try:
            report = engine.run_delivery(
                instance, channel, demands, library, force=args.force
            )
        except engine.DegenerateChannel as exc:
            last_error = exc
            continue
        print(json.dumps(report.to_json_dict()))
        return EXIT_OK
    raise last_error


def _parse_ratio(token) -> Fraction:
    try:
        return Fraction(token)
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"bad memory ratio {token!r}") from None


def _parse_point(token) -> SystemPoint:
    parts = [p.strip() for p in token.replace(",", " ").split()]
    if len(parts) not in (3, 4):
        raise ParseError(f"point must be 'K ratio L [m]', got {token!r}")
    users = int(parts[0])
    ratio = _parse_ratio(parts[1])
    antennas = int(parts[2])
    m = int(parts[3]) if len(parts) == 4 else None
    return SystemPoint(users, antennas, ratio, m)


def _points_from_file(path):
    points = []
    for raw in _read_text(path).splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        points.append(_parse_point(line))
    return points


def cmd_compare(args) -> int:
    points = []
    if args.points is not None:
        points.extend(_points_from_file(args.points))
    for token in args.point or []:
        points.append(_parse_point(token))
    _write_text(args.out, metrics.table_report(points))
    return EXIT_OK


def cmd_sweep(args) -> int:
    users, antennas = args.users, args.antennas
    t_max = args.t_max if args.t_max is not None else users - antennas
    t_values = [t for t in range(args.t_min, t_max + 1)]
    points = []
    for t in t_values:
        try:
            points.append(SystemPoint(users, antennas, Fraction(t, users), args.m))
        except DomainError:
            continue
    _write_text(args.out, metrics.table_report(points))
    if args.plot_out is not None:
        lines = ["ratio,log10_F_asmst,log10_F_s1,log10_F_s2,log10_F_s3"]
        for p in points:
            cells = [str(p.memory_ratio)]
            for which in ("asmst", 1, 2, 3):
                try:
                    metric = (
                        metrics.asmst_metrics(p)
                        if which == "asmst"
                        else metrics.scheme_metrics(p, which)
                    )
                    cells.append(f"{math.log10(metric.subpacketization):.6f}")
                except (ConstraintViolation, DomainError):
                    cells.append("")
            lines.append(",".join(cells))
        _write_text(args.plot_out, "\n".join(lines) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mapda",
        description="Placement delivery array toolkit and information-retrieval delivery simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="check a grid file against C1-C4")
    p_val.add_argument("file", help="array file ('-' for stdin)")
    p_val.add_argument("--antennas", "-L", type=int, required=True)
    p_val.set_defaults(func=cmd_validate)

    p_gen = sub.add_parser("gen", help="generate an array")
    gen_sub = p_gen.add_subparsers(dest="generator", required=True)
    g_mn = gen_sub.add_parser("mn", help="t-subset star pattern (single antenna)")
    g_mn.add_argument("--users", "-K", type=int, required=True)
    g_mn.add_argument("--t", type=int, required=True)
    g_cy = gen_sub.add_parser("cyclic", help="circulant array on K-t antennas")
    g_cy.add_argument("--users", "-K", type=int, required=True)
    g_cy.add_argument("--t", type=int, required=True)
    g_rep = gen_sub.add_parser("replicate", help="concatenate copies of a base array")
    g_rep.add_argument("--input", "-i", default="-", help="base array file (default stdin)")
    g_rep.add_argument("--copies", "-g", type=int, required=True)
    for g in (g_mn, g_cy, g_rep):
        g.add_argument("--out", "-o", default=None, help="output file (default stdout)")
        g.set_defaults(func=cmd_gen)

    p_sim = sub.add_parser("simulate", help="run the delivery protocol end to end")
    p_sim.add_argument("file", help="array file ('-' for stdin)")
    p_sim.add_argument("--files", "-N", type=int, required=True)
    p_sim.add_argument("--demands", default=None, help="'random' or comma list (default ((k-1) mod N)+1)")
    p_sim.add_argument("--channel", default=None, help="channel fixture file (default seeded random)")
    p_sim.add_argument("--library", default=None, help="library fixture file (default seeded random)")
    p_sim.add_argument("--scalar", choices=("auto", EXACT, FLOAT), default="auto")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--force", action="store_true", help="attempt delivery even when t < L")
    p_sim.set_defaults(func=cmd_simulate)

    p_cmp = sub.add_parser("compare", help="CSV metric comparison at given points")
    p_cmp.add_argument("--points", default=None, help="points file: lines 'K ratio L [m]'")
    p_cmp.add_argument("--point", action="append", help="inline point 'K,ratio,L[,m]' (repeatable)")
    p_cmp.add_argument("--out", "-o", default=None)
    p_cmp.set_defaults(func=cmd_compare)

    p_swp = sub.add_parser("sweep", help="sweep memory ratios at fixed K and L")
    p_swp.add_argument("--users", "-K", type=int, required=True)
    p_swp.add_argument("--antennas", "-L", type=int, required=True)
    p_swp.add_argument("--m", type=int, default=None)
    p_swp.add_argument("--t-min", type=int, default=1, dest="t_min")
    p_swp.add_argument("--t-max", type=int, default=None, dest="t_max")
    p_swp.add_argument("--out", "-o", default=None)
    p_swp.add_argument("--plot-out", default=None, help="also write log10-F plot data CSV")
    p_swp.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, arrays.RaggedGrid, arrays.NonPositiveSlotId, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (
        DomainError,
        ValidationFailure,
        ConstraintViolation,
        Infeasible,
        DimensionMismatch,
        BackendMismatch,
        engine.DegenerateChannel,
        engine.DecodeMismatch,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


def run():  # console-script entry point
    raise SystemExit(main())


if __name__ == "__main__":
    run()
