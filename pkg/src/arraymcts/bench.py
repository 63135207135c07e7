"""Timing harness, slope fits, CSV/plot output and the equivalence matrix."""

from __future__ import annotations

import csv
import math
import time
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import OverflowPolicy, SearchConfig
from .errors import BranchingOverflowError
from .mdp import EnvSpec, make_bandit_env, make_bug_trap_env, make_chain_env
from .planning import IMPLEMENTATIONS, step_seed
from .snapshot import Divergence

CSV_HEADER = ("impl", "n", "depth", "trial", "step", "seconds")
FIT_HEADER = ("impl", "n", "slope", "intercept", "r_squared", "points")

# Published seconds-per-layer slopes, for side-by-side reporting only.
REFERENCE_SLOPES = {
    5000: {"tree": 0.017, "array": 0.008},
    50000: {"tree": 0.225, "array": 0.095},
}


@dataclass(frozen=True)
class BenchRecord:
    impl: str
    n: int
    depth: int
    trial: int
    step: int
    seconds: float
    failed: bool = False
    overflow_events: int = 0


@dataclass(frozen=True)
class SlopeFit:
    impl: str
    n: int
    slope: float
    intercept: float
    r_squared: float
    points: int


@dataclass
class BenchConfig:
    impls: Sequence[str] = ("tree", "array")
    ns: Sequence[int] = (5000, 50000)
    depths: Sequence[int] = tuple(range(4, 13))
    trials: int = 10
    steps: int = 10
    seed: int = 0
    overflow: OverflowPolicy = OverflowPolicy.FAIL
    exploration_c: float | None = None  # None: use the environment's hint
    warmup: bool = True

    def __post_init__(self):
        unknown = [i for i in self.impls if i not in IMPLEMENTATIONS]
        if unknown:
            raise ValueError(f"unknown implementation(s): {', '.join(unknown)}")
        if min(self.ns, default=1) < 1 or min(self.depths, default=1) < 1:
            raise ValueError("simulation counts and depths must be positive")
        if self.trials < 0 or self.steps < 0:
            raise ValueError("trials and steps must be >= 0")
        self.overflow = OverflowPolicy(self.overflow)


def _search_config(env: EnvSpec, n: int, depth: int, cfg: BenchConfig, seed: int) -> SearchConfig:
    c = env.exploration_hint if cfg.exploration_c is None else cfg.exploration_c
    return SearchConfig(n, depth, env.max_branching, c, seed=seed, overflow=cfg.overflow)


def run_benchmark(cfg: BenchConfig, env: EnvSpec | None = None,
                  progress: Callable[[str], None] | None = None) -> list[BenchRecord]:
    """Time receding-horizon planning over the (impl, N, depth) grid.

    Each trial starts from ``env.start`` and runs ``cfg.steps`` plan/act
    cycles; only the search call sits inside the timed region. A search that
    overflows under the FAIL policy yields one failed record and ends that
    trial, since there is no action to execute.
    """
    env = env or make_bug_trap_env()
    records = []
    for impl in cfg.impls:
        search_fn = IMPLEMENTATIONS[impl]
        for n in cfg.ns:
            for depth in cfg.depths:
                if cfg.warmup:
                    try:
                        search_fn(env.start, env, _search_config(env, n, depth, cfg, cfg.seed))
                    except BranchingOverflowError:
                        pass
                for trial in range(cfg.trials):
                    records.extend(_run_trial(search_fn, impl, env, n, depth, trial, cfg))
                if progress:
                    progress(f"{impl} n={n} depth={depth} done")
    return records


def _run_trial(search_fn, impl, env, n, depth, trial, cfg):
    out = []
    state = env.start
    exec_rng = np.random.default_rng([cfg.seed % 2**63, trial, 2**31])
    for step in range(cfg.steps):
        sc = _search_config(env, n, depth, cfg, step_seed(cfg.seed, trial, step))
        t0 = time.perf_counter()
        try:
            result = search_fn(state, env, sc)
        except BranchingOverflowError:
            out.append(BenchRecord(impl, n, depth, trial, step, time.perf_counter() - t0, failed=True))
            break
        elapsed = time.perf_counter() - t0
        out.append(BenchRecord(impl, n, depth, trial, step, elapsed,
                               overflow_events=result.overflow_events))
        state = tuple(env._step(state, result.best_action, float(exec_rng.random())))
    return out


def fit_line(xs, ys) -> tuple[float, float, float]:
    """Ordinary least squares; returns (slope, intercept, r_squared)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("need at least two points of equal length")
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    if sxx == 0:
        raise ValueError("need at least two distinct x values")
    slope = float(((x - xm) * (y - ym)).sum()) / sxx
    intercept = float(ym - slope * xm)
    ss_res = float(((y - (intercept + slope * x)) ** 2).sum())
    ss_tot = float(((y - ym) ** 2).sum())
    if ss_tot == 0:
        r2 = 1.0
    else:
        r2 = 1.0 - ss_res / ss_tot
        # exactly linear input can leave rounding residue
        if math.isclose(ss_res, 0.0, abs_tol=1e-12 * ss_tot):
            r2 = 1.0
    return slope, intercept, r2


def group_means(records) -> dict:
    """{(impl, n): {depth: [seconds, ...]}} over successful records."""
    groups = defaultdict(lambda: defaultdict(list))
    for r in records:
        if not r.failed:
            groups[(r.impl, r.n)][r.depth].append(r.seconds)
    return groups


def fit_slopes(records, min_depths: int = 3) -> list[SlopeFit]:
    """Least-squares fit of mean search time against depth per (impl, N)."""
    fits = []
    for (impl, n), by_depth in sorted(group_means(records).items()):
        if len(by_depth) < min_depths:
            warnings.warn(f"skipping {impl} n={n}: {len(by_depth)} depth(s), need {min_depths}")
            continue
        depths = sorted(by_depth)
        means = [float(np.mean(by_depth[d])) for d in depths]
        slope, intercept, r2 = fit_line(depths, means)
        fits.append(SlopeFit(impl, n, slope, intercept, r2, len(depths)))
    return fits


def slope_ratios(fits, numerator: str = "tree", denominator: str = "array") -> dict[int, float]:
    """``numerator / denominator`` slope ratio for each N that has both."""
    by = {(f.impl, f.n): f.slope for f in fits}
    out = {}
    for (impl, n), slope in by.items():
        if impl == numerator and (denominator, n) in by:
            den = by[(denominator, n)]
            out[n] = slope / den if den != 0 else math.inf
    return dict(sorted(out.items()))


def emit_csv(records, path) -> Path:
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for r in records:
                w.writerow([r.impl, r.n, r.depth, r.trial, r.step, repr(float(r.seconds))])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def parse_csv(path) -> list[BenchRecord]:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
    return [BenchRecord(impl, int(n), int(d), int(t), int(s), float(sec))
            for impl, n, d, t, s, sec in rows[1:]]


def emit_fits_csv(fits, path) -> Path:
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(FIT_HEADER)
            for f in fits:
                w.writerow([f.impl, f.n, repr(f.slope), repr(f.intercept), repr(f.r_squared), f.points])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def emit_plot_data(csv_path, dat_path, svg_path=None) -> None:
    """Mean time vs depth per (impl, N), read back from an emitted CSV.

    The ``.dat`` file has one gnuplot index block per group with columns
    ``depth mean std count``; the optional SVG draws one polyline per group.
    """
    groups = group_means(parse_csv(csv_path))
    series = {}
    for key in sorted(groups):
        by_depth = groups[key]
        series[key] = [(d, float(np.mean(v)), float(np.std(v)), len(v)) for d, v in sorted(by_depth.items())]
    try:
        with open(dat_path, "w") as fh:
            for i, ((impl, n), rows) in enumerate(series.items()):
                if i:
                    fh.write("\n\n")
                fh.write(f"# {impl} n={n}\n# depth mean_seconds std_seconds count\n")
                for d, m, s, k in rows:
                    fh.write(f"{d} {m!r} {s!r} {k}\n")
    except OSError as exc:
        raise OSError(f"cannot write {dat_path}: {exc}") from exc
    if svg_path is not None:
        Path(svg_path).write_text(_svg(series))


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _svg(series, width=640, height=400, pad=50) -> str:
    pts = [(d, m) for rows in series.values() for d, m, _, _ in rows]
    x0, x1 = (min(p[0] for p in pts), max(p[0] for p in pts)) if pts else (0, 1)
    y1 = max((p[1] for p in pts), default=1.0) or 1.0
    x1 = x1 if x1 > x0 else x0 + 1

    def sx(d):
        return pad + (d - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(m):
        return height - pad - m / y1 * (height - 2 * pad)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
           f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle">max depth</text>',
           f'<text x="12" y="{pad - 15}">mean seconds (max {y1:.3g})</text>']
    for i, ((impl, n), rows) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        coords = " ".join(f"{sx(d):.1f},{sy(m):.1f}" for d, m, _, _ in rows)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}">'
                   f'<title>{impl} n={n}</title></polyline>')
        out.append(f'<text x="{width - pad + 4}" y="{pad + 16 * i}" fill="{color}" '
                   f'font-size="11">{impl} n={n}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# -- equivalence matrix ------------------------------------------------------

def default_envs() -> dict[str, EnvSpec]:
    return {
        "bandit": make_bandit_env((0.2, 0.5, 0.9)),
        "chain": make_chain_env(5),
        "bug_trap": make_bug_trap_env(),
    }


@dataclass(frozen=True)
class VerifyCell:
    env_name: str
    env: EnvSpec = field(repr=False)
    n: int
    depth: int
    seed: int

    def config(self) -> SearchConfig:
        return SearchConfig(self.n, self.depth, self.env.max_branching,
                            self.env.exploration_hint, seed=self.seed)

    @property
    def label(self) -> str:
        return f"{self.env_name} n={self.n} depth={self.depth} seed={self.seed}"


def default_matrix(seeds: int = 20, ns=(200,), depths=(1, 5, 8), envs=None) -> list[VerifyCell]:
    envs = envs or default_envs()
    return [VerifyCell(name, env, n, d, s)
            for name, env in envs.items() for n in ns for d in depths for s in range(seeds)]


@dataclass
class CellResult:
    cell: VerifyCell
    impl: str
    divergence: Divergence | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.divergence is None and self.error is None

    def line(self) -> str:
        tag = "PASS" if self.ok else "FAIL"
        msg = f"{tag} {self.cell.label} {self.impl}"
        if self.error:
            msg += f": {self.error}"
        elif self.divergence:
            msg += f": {self.divergence}"
        return msg


@dataclass
class EquivalenceReport:
    results: list
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.results)

    @property
    def failures(self) -> list:
        return [r for r in self.results if not r.ok]

    def first_failure(self) -> CellResult | None:
        bad = self.failures
        return bad[0] if bad else None


def verify_equivalence(matrix, impls=("array", "array_unsorted"), reference: str = "tree",
                       runners: dict | None = None) -> EquivalenceReport:
    """Compare each implementation's tree against the reference cell by cell.

    ``runners`` overrides the search callable per implementation name, which
    is how fault-injected builds are checked.
    """
    fns = {**IMPLEMENTATIONS, **(runners or {})}
    report = EquivalenceReport([])
    if not matrix:
        report.warnings.append("empty verification matrix: nothing compared")
        warnings.warn(report.warnings[-1])
        return report
    for cell in matrix:
        cfg = cell.config()
        ref = fns[reference](cell.env.start, cell.env, cfg).snapshot()
        for impl in impls:
            try:
                got = fns[impl](cell.env.start, cell.env, cfg).snapshot()
            except BranchingOverflowError as exc:
                report.results.append(CellResult(cell, impl, None, error=str(exc)))
                continue
            report.results.append(CellResult(cell, impl, ref.compare(got)))
    return report
