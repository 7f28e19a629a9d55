"""Replicate execution and result persistence."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from .. import __version__
from ..bandit import Oracle, OracleError, StrategyConfig, Trace, run
from .config import ExperimentConfig
from .synthetic import build_composite

logger = logging.getLogger(__name__)

THREADS_ENV = "ADDBO_THREADS"


@dataclass(frozen=True)
class ResultRow:
    seed: int
    strategy: str
    t: int
    y_t: float
    r_t: float
    R_t: float
    S_t: float
    info_gain_cum: float
    beta_t: float
    wall_ms: float


COLUMNS = tuple(f.name for f in fields(ResultRow))
AGGREGATE_COLUMNS = ("strategy", "T", "mean_S_T", "stderr_S_T", "mean_RT_over_T", "stderr_RT_over_T")


def fmt(v) -> str:
    # repr of a float is the shortest string that round-trips
    if isinstance(v, float):
        return repr(v)
    return str(v)


def trace_rows(trace: Trace) -> list[ResultRow]:
    return [
        ResultRow(trace.seed, trace.strategy, r.t, float(r.y), float(r.r), float(r.R), float(r.S),
                  float(r.info_gain_cum), float(r.beta), float(r.wall_ms))
        for r in trace.rows
    ]


def write_rows(path: str | Path, rows: list[ResultRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in rows:
            w.writerow([fmt(v) for v in astuple(row)])


def read_rows(path: str | Path) -> list[ResultRow]:
    types = [f.type for f in fields(ResultRow)]
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != COLUMNS:
            raise ValueError(f"unexpected columns {header}")
        for rec in reader:
            vals = [int(v) if typ == "int" else float(v) if typ == "float" else v for v, typ in zip(rec, types)]
            out.append(ResultRow(*vals))
    return out


def compare_results(a: str | Path, b: str | Path, rel_tol: float = 0.0) -> bool:
    """Row-by-row comparison of two result CSVs; ``rel_tol=0`` demands exact equality."""
    ra, rb = read_rows(a), read_rows(b)
    if len(ra) != len(rb):
        return False
    for x, y in zip(ra, rb):
        for u, v in zip(astuple(x), astuple(y)):
            if isinstance(u, float):
                if math.isnan(u) and math.isnan(v):
                    continue
                if not math.isclose(u, v, rel_tol=rel_tol, abs_tol=rel_tol):
                    return False
            elif u != v:
                return False
    return True


def _stderr(v: np.ndarray) -> float:
    return float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else math.nan


def aggregate(traces: dict[tuple[str, int], Trace], T: int) -> list[dict]:
    by_strategy: dict[str, list[Trace]] = {}
    for (name, _), tr in traces.items():
        by_strategy.setdefault(name, []).append(tr)
    out = []
    for name, trs in by_strategy.items():
        S = np.array([tr.simple_regret() for tr in trs])
        RT = np.array([tr.cumulative_regret() / len(tr.rows) for tr in trs])
        out.append(
            {
                "strategy": name,
                "T": T,
                "mean_S_T": float(np.mean(S)),
                "stderr_S_T": _stderr(S),
                "mean_RT_over_T": float(np.mean(RT)),
                "stderr_RT_over_T": _stderr(RT),
            }
        )
    return out


def _job(args: tuple[ExperimentConfig, int, int]) -> tuple[int, int, Trace | None, str | None]:
    cfg, si, seed = args
    strategy: StrategyConfig = cfg.strategies[si]
    f = build_composite(cfg.function)
    oracle = Oracle(f, f.dim, eta=cfg.eta, optimum=f.f_star)
    try:
        return si, seed, run(oracle, strategy, cfg.T, seed, eta=cfg.eta, timing=cfg.timing), None
    except OracleError as exc:
        return si, seed, exc.trace, f"{exc}"
    except Exception:  # noqa: BLE001
        return si, seed, None, traceback.format_exc()


def pool_size(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def csv_name(strategy: str, seed: int) -> str:
    return f"{strategy}_seed{seed}.csv"


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None, threads: int | None = None) -> dict:
    """Run every (strategy, replicate) pair and write CSVs plus a manifest.

    Returns the manifest dictionary.
    """
    out = Path(out_dir or cfg.out_dir or "results")
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, si, seed) for si in range(len(cfg.strategies)) for seed in cfg.seeds]
    workers = min(pool_size(threads), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]

    traces: dict[tuple[str, int], Trace] = {}
    files, failures = [], []
    for si, seed, trace, err in sorted(results, key=lambda r: (r[0], r[1])):
        name = cfg.strategies[si].name
        if trace is not None:
            path = out / csv_name(name, seed)
            write_rows(path, trace_rows(trace))
            files.append(path.name)
        if err is not None:
            failures.append({"strategy": name, "seed": seed, "error": err})
            logger.error("%s seed %d failed: %s", name, seed, err)
        elif trace is not None:
            traces[(name, seed)] = trace

    agg = aggregate(traces, cfg.T)
    with open(out / "aggregate.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        for rec in agg:
            w.writerow([fmt(rec[c]) for c in AGGREGATE_COLUMNS])

    manifest = {
        "config_hash": cfg.config_hash(),
        "config": cfg.flat,
        "seeds": cfg.seeds,
        "strategies": [s.name for s in cfg.strategies],
        "version": __version__,
        "files": files,
        "aggregate": "aggregate.csv",
        "failures": failures,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
