"""Benchmark sweeps over (grid, contrast, preconditioner) and their tables.

A sweep is described by a JSON config::

    {
      "grids": [8, 16, 32, 64],
      "contrasts": [1, 1e2, 1e4],
      "islands": [[2, 2, 2, 2]],
      "preconditioners": ["agks", "ccmg"],
      "prolongations": ["wk", "bilinear"],
      "smoothers": ["sgs", "ilu"],
      "tol": 1e-9,
      "maxit": 60,
      "scale_by_contrast": false,
      "deflation": "auto",
      "partition": "geometric",
      "output": "md",
      "seed": 0
    }

Islands are rectangles ``[i0, j0, w, h]`` in coarsest (8x8) cells. Only
``grids`` and ``contrasts`` are required.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .agks import AgksCore, DeflationProjector
from .assembly import AssembledSystem, assemble_system
from .geometry import Grid, IslandSpec, partition_by_diagonal
from .krylov import CAP_REACHED, CONVERGED, DIVERGED, SolveReport, pcg
from .multigrid import build_hierarchy, canonical_prolongation

PRECONDITIONERS = ("agks_exact", "agks", "ccmg", "jacobi", "none")
PARTITIONS = ("geometric", "diagonal")
DEFLATION_MODES = ("auto", "on", "off")
OUTPUTS = ("csv", "md")

_NAMES = {"agks": "AGKS", "agks_exact": "AGKS (exact)", "ccmg": "CCMG",
          "jacobi": "Jacobi", "none": "None"}
_PROLONGATION_NAMES = {"wesseling_khalil": "Wesseling-Khalil", "bilinear": "Bi-linear"}
_SMOOTHER_NAMES = {"sgs": "sGS", "ilu": "ILU"}
_USES_HIERARCHY = ("agks", "ccmg")


class ConfigError(ValueError):
    """Invalid benchmark configuration or flag combination."""


@dataclass(frozen=True)
class SolverChoice:
    preconditioner: str
    prolongation: str = "bilinear"
    smoother: str = "sgs"
    deflation: str = "auto"
    partition: str = "geometric"
    scale_by_contrast: bool = False

    def __post_init__(self):
        if self.preconditioner not in PRECONDITIONERS:
            raise ConfigError(f"unknown preconditioner {self.preconditioner!r}")
        object.__setattr__(self, "prolongation", _canonical(self.prolongation))
        if self.smoother not in _SMOOTHER_NAMES:
            raise ConfigError(f"unknown smoother {self.smoother!r}")
        if self.deflation not in DEFLATION_MODES:
            raise ConfigError(f"unknown deflation mode {self.deflation!r}")
        if self.partition not in PARTITIONS:
            raise ConfigError(f"unknown partition {self.partition!r}")

    @property
    def deflated(self) -> bool:
        if self.deflation == "auto":
            return self.preconditioner.startswith("agks")
        return self.deflation == "on"

    def caption(self) -> str:
        name = _NAMES[self.preconditioner]
        if self.preconditioner not in _USES_HIERARCHY:
            return f"Preconditioner = {name}"
        return (f"Preconditioner = {name}, Prolongation = "
                f"{_PROLONGATION_NAMES[self.prolongation]}, "
                f"Smoother = {_SMOOTHER_NAMES[self.smoother]}")


def _canonical(kind: str) -> str:
    try:
        return canonical_prolongation(kind)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_islands(text: str) -> tuple[tuple[int, int, int, int], ...]:
    """``"2,2,2,2;5,5,1,1"`` -> rectangles in coarsest cells."""
    rects = []
    for part in filter(None, (p.strip() for p in text.split(";"))):
        vals = part.split(",")
        if len(vals) != 4:
            raise ConfigError(f"island {part!r} needs four integers i0,j0,w,h")
        try:
            rects.append(tuple(int(v) for v in vals))
        except ValueError:
            raise ConfigError(f"island {part!r} needs four integers i0,j0,w,h") from None
    return tuple(rects)


def build_system(nx: int, m: float, rects, partition: str = "geometric",
                 f=1.0) -> AssembledSystem:
    """Assemble on an ``nx`` grid; ``partition='diagonal'`` picks H from ``diag(K)``."""
    try:
        system = assemble_system(Grid(nx), IslandSpec(tuple(rects), m=m), f)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if partition == "diagonal":
        system = replace(system, partition=partition_by_diagonal(system.K))
    return system


def build_preconditioner(system: AssembledSystem, choice: SolverChoice, scale: float = 1.0):
    """Return ``(B, deflation)`` for the scaled operator ``scale * K``."""
    name = choice.preconditioner
    K = system.K * scale
    part = system.partition
    needs_h = name.startswith("agks") or choice.deflated
    if needs_h and part.is_empty:
        raise ConfigError(f"{name} with deflation={choice.deflation} needs a nonempty "
                          "highly-diffusive set")
    deflation = None
    if choice.deflated:
        deflation = DeflationProjector(K, part.components or (part.h_indices,))
    if name == "agks_exact":
        B = AgksCore(system, "exact", scale=scale, deflated=deflation is not None)
    elif name == "agks":
        B = AgksCore(system, "practical", choice.prolongation, choice.smoother,
                     scale=scale, deflated=deflation is not None)
    elif name == "ccmg":
        B = build_hierarchy(K, system.grid, choice.prolongation, choice.smoother)
    elif name == "jacobi":
        inv = 1.0 / K.diagonal()
        B = lambda r: inv * r  # noqa: E731
    else:
        B = None
    return B, deflation


def run_solve(system: AssembledSystem, choice: SolverChoice, tol: float = 1e-9,
              maxit: int = 60) -> tuple[np.ndarray, SolveReport]:
    """Set up the preconditioner and solve ``K x = b``."""
    scale = 1.0 / system.m if choice.scale_by_contrast else 1.0
    t0 = time.perf_counter()
    B, deflation = build_preconditioner(system, choice, scale)
    setup = time.perf_counter() - t0
    x, report = pcg(system.K * scale, system.b * scale, B, deflation, tol=tol, maxit=maxit)
    report.setup_seconds = setup
    return x, report


@dataclass
class BenchConfig:
    grids: list[int]
    contrasts: list[float]
    islands: tuple = ((2, 2, 2, 2),)
    preconditioners: list[str] = field(default_factory=lambda: ["agks", "ccmg"])
    prolongations: list[str] = field(default_factory=lambda: ["wesseling_khalil", "bilinear"])
    smoothers: list[str] = field(default_factory=lambda: ["ilu", "sgs"])
    tol: float = 1e-9
    maxit: int = 60
    scale_by_contrast: bool = False
    deflation: str = "auto"
    partition: str = "geometric"
    output: str = "md"
    seed: int = 0

    def __post_init__(self):
        if not self.grids:
            raise ConfigError("grids must not be empty")
        if not self.contrasts:
            raise ConfigError("contrasts must not be empty")
        for nx in self.grids:
            if not isinstance(nx, int) or nx < 8 or nx & (nx - 1):
                raise ConfigError(f"grid size {nx!r} is not a power of two >= 8")
        for m in self.contrasts:
            if not isinstance(m, (int, float)) or not m >= 1.0:
                raise ConfigError(f"contrast {m!r} must be a number >= 1")
        self.contrasts = [float(m) for m in self.contrasts]
        self.islands = tuple(tuple(int(v) for v in r) for r in self.islands)
        for r in self.islands:
            if len(r) != 4:
                raise ConfigError(f"island {list(r)} needs four integers i0,j0,w,h")
        try:
            IslandSpec(self.islands)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for p in self.preconditioners:
            if p not in PRECONDITIONERS:
                raise ConfigError(f"unknown preconditioner {p!r}")
        if not self.preconditioners:
            raise ConfigError("preconditioners must not be empty")
        self.prolongations = [_canonical(k) for k in self.prolongations]
        for s in self.smoothers:
            if s not in _SMOOTHER_NAMES:
                raise ConfigError(f"unknown smoother {s!r}")
        if self.deflation not in DEFLATION_MODES:
            raise ConfigError(f"unknown deflation mode {self.deflation!r}")
        if self.partition not in PARTITIONS:
            raise ConfigError(f"unknown partition {self.partition!r}")
        if self.output not in OUTPUTS:
            raise ConfigError(f"unknown output {self.output!r}")
        if not (self.tol > 0.0) or not isinstance(self.maxit, int) or self.maxit < 1:
            raise ConfigError("tol must be positive and maxit a positive integer")

    @classmethod
    def from_dict(cls, data: dict) -> "BenchConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("grids", "contrasts"):
            if key not in data:
                raise ConfigError(f"config needs {key!r}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "BenchConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)

    def choices(self) -> list[SolverChoice]:
        out = []
        for p in self.preconditioners:
            if p in _USES_HIERARCHY:
                for k in self.prolongations:
                    for s in self.smoothers:
                        out.append(SolverChoice(p, k, s, self.deflation, self.partition,
                                                self.scale_by_contrast))
            else:
                out.append(SolverChoice(p, deflation=self.deflation, partition=self.partition,
                                        scale_by_contrast=self.scale_by_contrast))
        return out


@dataclass
class BenchResult:
    choice: SolverChoice
    nx: int
    m: float
    report: SolveReport


def thread_count() -> int:
    raw = os.environ.get("HCDIFF_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"HCDIFF_THREADS={raw!r} is not an integer") from None
    return max(1, n)


def run_bench(config: BenchConfig, threads: int | None = None,
              progress: Callable[[BenchResult], None] | None = None) -> list[BenchResult]:
    """Run every (choice, grid, contrast) cell; results keep config order."""
    tasks = [(c, nx, m) for c in config.choices() for nx in config.grids for m in config.contrasts]

    def one(task):
        choice, nx, m = task
        system = build_system(nx, m, config.islands, choice.partition)
        _, report = run_solve(system, choice, config.tol, config.maxit)
        return BenchResult(choice, nx, m, report)

    threads = thread_count() if threads is None else threads
    results = []
    if threads == 1:
        for t in tasks:
            results.append(one(t))
            if progress:
                progress(results[-1])
        return results
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for res in pool.map(one, tasks):
            results.append(res)
            if progress:
                progress(res)
    return results


def format_contrast(m: float) -> str:
    k = np.log10(m)
    if abs(k - round(k)) < 1e-12:
        return f"10^{int(round(k))}"
    return f"{m:g}"


def markdown_tables(results: Sequence[BenchResult]) -> str:
    """One table per solver choice: rows ``h = 1/nx``, columns ``m``."""
    blocks = []
    by_choice: dict[SolverChoice, list[BenchResult]] = {}
    for r in results:
        by_choice.setdefault(r.choice, []).append(r)
    for choice, rs in by_choice.items():
        grids = sorted({r.nx for r in rs})
        ms = sorted({r.m for r in rs})
        cells = {(r.nx, r.m): r.report.cell() for r in rs}
        lines = [f"**{choice.caption()}**", "",
                 "| h \\ m | " + " | ".join(format_contrast(m) for m in ms) + " |",
                 "|---" * (len(ms) + 1) + "|"]
        for nx in grids:
            lines.append(f"| 1/{nx} | " + " | ".join(cells.get((nx, m), "") for m in ms) + " |")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


CSV_FIELDS = ["preconditioner", "prolongation", "smoother", "deflation", "partition",
              "scale_by_contrast", "nx", "m", "iterations", "status",
              "avg_reduction_factor", "final_relative_residual", "residual_history"]
TIMING_FIELDS = ["preconditioner", "prolongation", "smoother", "nx", "m",
                 "setup_seconds", "solve_seconds"]


def _key(r: BenchResult) -> list[str]:
    return [r.choice.preconditioner, r.choice.prolongation, r.choice.smoother]


def write_results_csv(path, results: Sequence[BenchResult], timings_path=None) -> None:
    """Deterministic result table; wall-clock timings go to ``timings_path``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in results:
            rep = r.report
            w.writerow(_key(r) + [r.choice.deflation, r.choice.partition,
                                  int(r.choice.scale_by_contrast), r.nx, repr(r.m),
                                  rep.iterations, rep.converged,
                                  repr(rep.avg_reduction_factor),
                                  repr(rep.final_relative_residual),
                                  " ".join(repr(v) for v in rep.residual_history)])
    if timings_path is not None:
        with open(timings_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TIMING_FIELDS)
            for r in results:
                w.writerow(_key(r) + [r.nx, repr(r.m), repr(r.report.setup_seconds),
                                      repr(r.report.solve_seconds)])


def read_results_csv(path, timings_path=None) -> list[BenchResult]:
    timings = {}
    if timings_path is not None:
        with open(timings_path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                key = (row["preconditioner"], row["prolongation"], row["smoother"],
                       int(row["nx"]), float(row["m"]))
                timings[key] = (float(row["setup_seconds"]), float(row["solve_seconds"]))
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["status"] not in (CONVERGED, CAP_REACHED, DIVERGED):
                raise ValueError(f"unknown status {row['status']!r}")
            choice = SolverChoice(row["preconditioner"], row["prolongation"], row["smoother"],
                                  row["deflation"], row["partition"],
                                  bool(int(row["scale_by_contrast"])))
            nx, m = int(row["nx"]), float(row["m"])
            setup, solve = timings.get((choice.preconditioner, choice.prolongation,
                                        choice.smoother, nx, m), (0.0, 0.0))
            rep = SolveReport(int(row["iterations"]), row["status"],
                              float(row["avg_reduction_factor"]),
                              float(row["final_relative_residual"]), setup, solve,
                              [float(v) for v in row["residual_history"].split()])
            out.append(BenchResult(choice, nx, m, rep))
    return out


def full_config() -> BenchConfig:
    """The full comparison: CCMG up to 10^9, AGKS up to 10^13."""
    return BenchConfig(grids=[8, 16, 32, 64],
                       contrasts=[1.0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8, 1e9, 1e11, 1e13],
                       preconditioners=["ccmg", "agks"])
