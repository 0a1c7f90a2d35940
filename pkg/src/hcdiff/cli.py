"""Command-line front end: ``hcdiff solve | bench | spectrum``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .bench import (
    DEFLATION_MODES,
    PARTITIONS,
    PRECONDITIONERS,
    BenchConfig,
    ConfigError,
    SolverChoice,
    build_system,
    markdown_tables,
    parse_islands,
    run_bench,
    run_solve,
    write_results_csv,
)
from .geometry import GeometryError, Grid, IslandSpec
from .spectral import spectrum_study, table_indices, write_spectrum_csv

DEFAULT_ISLANDS = "2,2,2,2"


def _contrast_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad contrast list {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("contrast list is empty")
    return vals


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hcdiff", description="Krylov solvers for high-contrast diffusion")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="assemble and solve one problem")
    s.add_argument("--n", type=int, default=16, help="cells per direction (power of two >= 8)")
    s.add_argument("--m", type=float, default=1.0, help="island diffusivity")
    s.add_argument("--islands", default=DEFAULT_ISLANDS,
                   help="i0,j0,w,h rectangles on the 8x8 mesh, ';'-separated")
    s.add_argument("--precond", choices=PRECONDITIONERS, default="agks")
    s.add_argument("--prolongation", choices=("wk", "bilinear"), default="bilinear")
    s.add_argument("--smoother", choices=("sgs", "ilu"), default="sgs")
    s.add_argument("--deflation", choices=DEFLATION_MODES, default="auto",
                   help="island deflation; auto enables it for AGKS only")
    s.add_argument("--partition", choices=PARTITIONS, default="geometric",
                   help="H set from the island geometry or from diag(K)")
    s.add_argument("--scale-by-contrast", action="store_true",
                   help="solve (K/m) x = b/m")
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--maxit", type=int, default=60)
    s.add_argument("--dump", type=Path, help="write cell-center solution values to this CSV")

    b = sub.add_parser("bench", help="run a sweep from a JSON config")
    b.add_argument("config", type=Path)
    b.add_argument("--out", type=Path, default=Path("bench_out"),
                   help="directory for tables.md, results.csv and timings.csv")
    b.add_argument("--quiet", action="store_true", help="no per-run progress lines")

    p = sub.add_parser("spectrum", help="condition numbers and eigenvalues of K and A")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--m", type=_contrast_list, default=[1e0, 1e2, 1e4, 1e6, 1e8, 1e10],
                   help="comma-separated contrasts")
    p.add_argument("--islands", default=DEFAULT_ISLANDS)
    p.add_argument("--out", type=Path, help="CSV path (default: stdout)")
    return parser


def _report_line(nx, m, choice: SolverChoice, rep) -> str:
    return (f"nx={nx} m={m:g} precond={choice.preconditioner} "
            f"prolongation={choice.prolongation} smoother={choice.smoother} "
            f"iterations={rep.iterations} status={rep.converged} "
            f"factor={rep.avg_reduction_factor:.3f} rr={rep.final_relative_residual:.3e} "
            f"setup={rep.setup_seconds:.3f}s solve={rep.solve_seconds:.3f}s")


def cmd_solve(args, parser) -> int:
    try:
        choice = SolverChoice(args.precond, args.prolongation, args.smoother, args.deflation,
                              args.partition, args.scale_by_contrast)
        system = build_system(args.n, args.m, parse_islands(args.islands), args.partition)
        x, rep = run_solve(system, choice, args.tol, args.maxit)
    except (ConfigError, GeometryError) as exc:
        parser.error(str(exc))
    print(_report_line(args.n, args.m, choice, rep))
    if args.dump is not None:
        xc, yc = system.grid.cell_centers()
        try:
            with open(args.dump, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["x", "y", "u"])
                for row in zip(xc.ravel(), yc.ravel(), x):
                    w.writerow([repr(float(v)) for v in row])
        except OSError as exc:
            print(f"hcdiff: cannot write {args.dump}: {exc}", file=sys.stderr)
            return 1
    return 0


def cmd_bench(args, parser) -> int:
    try:
        config = BenchConfig.load(args.config)
    except OSError as exc:
        print(f"hcdiff: cannot read {args.config}: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, TypeError) as exc:
        parser.error(str(exc))
    progress = None if args.quiet else (
        lambda r: print(_report_line(r.nx, r.m, r.choice, r.report), file=sys.stderr))
    try:
        results = run_bench(config, progress=progress)
    except ConfigError as exc:
        parser.error(str(exc))
    tables = markdown_tables(results)
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "tables.md").write_text(tables, encoding="utf-8")
        write_results_csv(args.out / "results.csv", results, args.out / "timings.csv")
    except OSError as exc:
        print(f"hcdiff: cannot write to {args.out}: {exc}", file=sys.stderr)
        return 1
    if config.output == "md":
        sys.stdout.write(tables)
    else:
        sys.stdout.write((args.out / "results.csv").read_text(encoding="utf-8"))
    return 0


def cmd_spectrum(args, parser) -> int:
    try:
        grid = Grid(args.n)
        islands = IslandSpec(parse_islands(args.islands))
        if grid.n > 4096:
            raise ConfigError(f"dense spectra are limited to n <= 4096, got {grid.n}")
        rows = spectrum_study(grid, islands, args.m)
    except (ConfigError, GeometryError) as exc:
        parser.error(str(exc))
    k_idx, a_idx = table_indices(grid, islands)
    try:
        write_spectrum_csv(args.out if args.out else sys.stdout, rows, k_idx, a_idx)
    except OSError as exc:
        print(f"hcdiff: cannot write {args.out}: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    np.seterr(all="ignore")
    handler = {"solve": cmd_solve, "bench": cmd_bench, "spectrum": cmd_spectrum}[args.command]
    return handler(args, parser)


if __name__ == "__main__":
    sys.exit(main())
