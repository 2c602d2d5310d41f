"""Benchmark grid: generate, solve, tabulate.

A grid spec is ``key=v1,v2;key=v;...`` over n, k, tau, alpha, seeds and solver,
for example ``n=20,40,80;k=3;tau=1;alpha=1;seeds=10;solver=profile``.
``seeds=10`` runs seeds 0..9 (``seed0`` shifts the first one).
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import pandas as pd

from errors import DomainError
from generator import GeneratorConfig, generate, parse_alpha
from model import categorize
from solver_brute import solve_exhaustive
from solver_profile import solve

log = logging.getLogger(__name__)

COLUMNS = ["n", "k", "tau", "alpha", "seed", "solver", "time_ms", "objective", "users",
           "sod_penalty", "card_penalty", "usercount_penalty", "auth_penalty"]
GROUP = ["n", "k", "tau", "alpha", "solver"]
SOLVERS = ("profile", "brute")


@dataclass(frozen=True)
class BenchGrid:
    n: tuple[int, ...]
    k: tuple[int | None, ...] = (None,)
    tau: tuple[int | None, ...] = (None,)
    alpha: tuple[str, ...] = ("1",)
    seeds: int = 1
    seed0: int = 0
    solver: tuple[str, ...] = ("profile",)

    def runs(self):
        for n, k, tau, alpha, solver in product(self.n, self.k, self.tau, self.alpha, self.solver):
            for seed in range(self.seed0, self.seed0 + self.seeds):
                yield GeneratorConfig(n, k, tau, parse_alpha(alpha), seed=seed), solver


def _ints(values, key):
    try:
        return tuple(int(v) for v in values)
    except ValueError:
        raise DomainError(f"grid key {key!r} takes integers, got {values}") from None


def parse_grid(spec: str) -> BenchGrid:
    fields = {}
    for part in filter(None, (p.strip() for p in spec.split(";"))):
        key, sep, raw = part.partition("=")
        key = key.strip()
        if not sep or not raw.strip():
            raise DomainError(f"grid entry {part!r} is not key=value")
        if key in fields:
            raise DomainError(f"grid key {key!r} given twice")
        fields[key] = [v.strip() for v in raw.split(",") if v.strip()]
    unknown = set(fields) - {"n", "k", "tau", "alpha", "seeds", "seed0", "solver"}
    if unknown:
        raise DomainError(f"unknown grid keys {sorted(unknown)}")
    if "n" not in fields:
        raise DomainError("grid needs n")
    solvers = tuple(fields.get("solver", ["profile"]))
    bad = [s for s in solvers if s not in SOLVERS]
    if bad:
        raise DomainError(f"unknown solvers {bad}; choose from {SOLVERS}")
    for key in ("seeds", "seed0"):
        if len(fields.get(key, [0])) != 1:
            raise DomainError(f"grid key {key!r} takes one value")
    return BenchGrid(
        n=_ints(fields["n"], "n"),
        k=_ints(fields["k"], "k") if "k" in fields else (None,),
        tau=_ints(fields["tau"], "tau") if "tau" in fields else (None,),
        alpha=tuple(str(parse_alpha(a)) for a in fields.get("alpha", ["1"])),
        seeds=_ints(fields.get("seeds", ["1"]), "seeds")[0],
        seed0=_ints(fields.get("seed0", ["0"]), "seed0")[0],
        solver=solvers,
    )


def run_grid(grid: BenchGrid, threads: int = 1) -> pd.DataFrame:
    rows = []
    for cfg, solver in grid.runs():
        instance = generate(cfg)
        started = time.perf_counter()
        result = solve(instance, threads=threads) if solver == "profile" else solve_exhaustive(instance)
        elapsed = (time.perf_counter() - started) * 1000
        cats = categorize(instance, result.relation)
        rows.append({
            "n": cfg.n, "k": cfg.k, "tau": cfg.tau, "alpha": str(cfg.alpha), "seed": cfg.seed,
            "solver": solver, "time_ms": round(elapsed, 3), "objective": result.total_weight,
            "users": result.relation.user_count(), "sod_penalty": cats["sod"],
            "card_penalty": cats["cardinality"], "usercount_penalty": cats["user_count"],
            "auth_penalty": cats["authorizations"],
        })
        log.info("bench n=%d k=%d tau=%d seed=%d %s: %d in %.1f ms",
                 cfg.n, cfg.k, cfg.tau, cfg.seed, solver, result.total_weight, elapsed)
    return pd.DataFrame(rows, columns=COLUMNS)


def summarize(df: pd.DataFrame) -> pd.DataFrame:
    """Mean of every measured column per configuration."""
    measured = [c for c in COLUMNS if c not in GROUP and c != "seed"]
    numeric = df[GROUP].copy()
    for col in measured:
        numeric[col] = pd.to_numeric(df[col], errors="coerce")
    summary = numeric.groupby(GROUP, sort=False).mean().reset_index()
    summary.insert(len(GROUP), "runs", df.groupby(GROUP, sort=False).size().to_numpy())
    return summary.round(3)


def summary_path(csv_path) -> Path:
    path = Path(csv_path)
    return path.with_name(f"{path.stem}.summary{path.suffix or '.csv'}")


def write_report(df: pd.DataFrame, csv_path, xlsx_path=None) -> pd.DataFrame:
    summary = summarize(df)
    df.to_csv(csv_path, index=False)
    summary.to_csv(summary_path(csv_path), index=False)
    if xlsx_path:
        with pd.ExcelWriter(xlsx_path, engine="xlsxwriter") as writer:
            df.to_excel(writer, sheet_name="Runs", index=False)
            summary.to_excel(writer, sheet_name="Summary", index=False)
            for name, frame in (("Runs", df), ("Summary", summary)):
                writer.sheets[name].set_column(0, len(frame.columns) - 1, 14)
    return summary
