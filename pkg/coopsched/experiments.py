"""
Experiment harness: single runs, parameter sweeps and result tables.
"""

import dataclasses
import itertools
import logging
from dataclasses import dataclass
from typing import Iterable, List, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.stats
from joblib import Parallel, delayed

from coopsched.cache import RunResultCache
from coopsched.config import ScenarioConfig
from coopsched.exceptions import ConfigurationError, CoopSchedError
from coopsched.simulator import World

LOG = logging.getLogger(__name__)

RESULT_COLUMNS = [
    "scenario",
    "seed",
    "controller",
    "demand",
    "interval",
    "penetration",
    "vehicles",
    "mean_delay_s",
    "std_delay_s",
]
CELL_COLUMNS = ["scenario", "controller", "demand", "interval", "penetration"]

PRESETS = {
    "clustering": {
        "demands": ["low", "med", "high"],
        "controllers": ["fixed", "schedule", "coop"],
        "intervals": [0.0, 3.0],
        "penetrations": [1.0],
    },
    "penetration": {
        "demands": ["low", "med", "high"],
        "controllers": ["coop"],
        "intervals": [0.0],
        "penetrations": [1.0, 0.7, 0.5, 0.3],
    },
}


@dataclass(frozen=True)
class RunResult:
    """Delay statistics of one run.

    ``mean_delay_s`` and ``std_delay_s`` are reported as 0 when no vehicle was measured,
    ``undefined`` flags that case.
    """

    scenario: str
    seed: int
    controller: str
    demand: str
    interval: float
    penetration: float
    vehicles: int
    mean_delay_s: float
    std_delay_s: float
    throughput: int = 0

    @property
    def undefined(self) -> bool:
        return self.vehicles == 0


def measure(world: World, config: ScenarioConfig) -> RunResult:
    """Delay statistics of the vehicles generated within the measurement window."""
    start, end = config.window
    delays = np.array([r.delay for r in world.exit_log if start <= r.t_gen < end])
    throughput = sum(1 for r in world.exit_log if start <= r.t_exit < end)
    if len(delays) == 0:
        LOG.warning(f"{config.name} {config.controller} seed {world.seed}: no vehicle measured")
    return RunResult(
        scenario=config.name,
        seed=world.seed,
        controller=config.controller,
        demand=config.demand.tier,
        interval=config.interval,
        penetration=config.penetration,
        vehicles=int(len(delays)),
        mean_delay_s=float(delays.mean()) if len(delays) else 0.0,
        std_delay_s=float(delays.std()) if len(delays) else 0.0,
        throughput=throughput,
    )


def run_scenario(
    config: ScenarioConfig, seed: int, cache: Optional[RunResultCache] = None
) -> RunResult:
    """Simulate one scenario with one seed.

    Args:
        config (ScenarioConfig): The scenario.
        seed (int): Seed of the arrival streams.
        cache (RunResultCache, optional): Where to look up and store the result.

    Returns:
        RunResult: Delay of the vehicles generated within the measurement window.
    """
    if cache is not None:
        cached = cache.get(config, seed)
        if cached is not None:
            return RunResult(**cached)
    LOG.info(
        f"run {config.name}: controller={config.controller} demand={config.demand.tier} "
        f"interval={config.interval} penetration={config.penetration} seed={seed}"
    )
    world = World(config, seed).run()
    result = measure(world, config)
    LOG.info(
        f"done {config.name} {config.controller} seed {seed}: {result.vehicles} vehicles, "
        f"mean delay {result.mean_delay_s:.2f}s"
    )
    if cache is not None:
        cache.set(config, seed, dataclasses.asdict(result))
    return result


class SweepResult(NamedTuple):
    results: List[RunResult]
    table: pd.DataFrame


def _run_cell(config: ScenarioConfig, seed: int, cache: Optional[RunResultCache]) -> RunResult:
    try:
        return run_scenario(config, seed, cache=cache)
    except CoopSchedError as e:
        cell = (
            f"cell controller={config.controller} demand={config.demand.tier} interval={config.interval} "
            f"penetration={config.penetration} seed={seed}"
        )
        if isinstance(e, ConfigurationError):
            raise ConfigurationError(f"{cell}: {e}") from e
        raise CoopSchedError(f"{cell}: {e}") from e


def sweep(
    config: ScenarioConfig,
    controllers: Optional[Sequence[str]] = None,
    demands: Optional[Sequence[str]] = None,
    intervals: Optional[Sequence[float]] = None,
    penetrations: Optional[Sequence[float]] = None,
    seeds: Optional[Sequence[int]] = None,
    n_jobs: int = 1,
    cache: Optional[RunResultCache] = None,
) -> SweepResult:
    """Run the cross product of the given axes, every cell with every seed.

    Axes that are not given keep the value of ``config``. Cells run in parallel and the
    results come back in the order of the cross product.

    Args:
        config (ScenarioConfig): The template scenario.
        controllers (Sequence[str], optional): Controllers to compare.
        demands (Sequence[str], optional): Demand tiers.
        intervals (Sequence[float], optional): Clustering intervals.
        penetrations (Sequence[float], optional): CAV penetration rates.
        seeds (Sequence[int], optional): Seeds. Defaults to the scenario's seeds.
        n_jobs (int, optional): Parallel workers, -1 for all cores. Defaults to 1.
        cache (RunResultCache, optional): Result cache. Cached cells are not re-run.

    Returns:
        SweepResult: The per-run results and their aggregate table.
    """
    seeds = list(config.seeds if seeds is None else seeds)
    if not seeds:
        raise ConfigurationError("need at least one seed", field="seeds")
    axes = itertools.product(
        controllers or [config.controller],
        demands or [config.demand.tier],
        intervals if intervals is not None else [config.interval],
        penetrations if penetrations is not None else [config.penetration],
    )
    cells = []
    for controller, demand, interval, penetration in axes:
        cell = config.with_overrides(
            controller=controller, demand=demand, interval=interval, penetration=penetration
        )
        cells.extend((cell, seed) for seed in seeds)
    LOG.info(f"sweep over {len(cells)} runs with n_jobs={n_jobs}")

    results = Parallel(n_jobs=n_jobs)(delayed(_run_cell)(cell, seed, cache) for cell, seed in cells)
    for i, result in enumerate(results):
        LOG.info(
            f"cell {i + 1}/{len(results)}: {result.controller} {result.demand} interval={result.interval} "
            f"penetration={result.penetration} seed={result.seed} -> {result.mean_delay_s:.2f}s"
        )
    return SweepResult(list(results), aggregate(results))


###################################################################################################
# Tables
###################################################################################################


def results_frame(results: Iterable[RunResult]) -> pd.DataFrame:
    return pd.DataFrame([dataclasses.asdict(r) for r in results], columns=RESULT_COLUMNS + ["throughput"])


def aggregate(results: Iterable[RunResult], confidence_level: float = 0.95) -> pd.DataFrame:
    """Per-cell statistics across seeds.

    The cell mean is the mean of the per-seed means. ``sem`` is the standard error of
    that mean and ``ci`` the half width of its normal-approximation confidence interval.
    """
    frame = results_frame(results)
    if frame.empty:
        return pd.DataFrame(columns=CELL_COLUMNS + ["seeds", "vehicles", "mean_delay_s", "std_delay_s", "sem", "ci"])
    grouped = frame.groupby(CELL_COLUMNS, sort=False)
    table = grouped.agg(
        seeds=("seed", "count"),
        vehicles=("vehicles", "sum"),
        mean_delay_s=("mean_delay_s", "mean"),
        std_delay_s=("mean_delay_s", "std"),
    ).reset_index()
    table["std_delay_s"] = table["std_delay_s"].fillna(0.0)
    table["sem"] = table["std_delay_s"] / np.sqrt(table["seeds"])
    factor = scipy.stats.norm.interval(confidence_level, loc=0, scale=1)[1]
    table["ci"] = factor * table["sem"]
    return table


def improvement_table(results: Iterable[RunResult]) -> pd.DataFrame:
    """Percentage improvement of every controller over fixed timing.

    Rows are demand tier and clustering interval. The fixed-time reference of a demand
    tier does not depend on the clustering interval.
    """
    table = aggregate(results)
    fixed = table[table["controller"] == "fixed"].groupby("demand")["mean_delay_s"].mean()
    others = table[table["controller"] != "fixed"].copy()
    others["fixed_delay_s"] = others["demand"].map(fixed)
    others = others.dropna(subset=["fixed_delay_s"])
    others["improvement_pct"] = 100.0 * (others["fixed_delay_s"] - others["mean_delay_s"]) / others["fixed_delay_s"]
    return others[["demand", "interval", "controller", "penetration", "mean_delay_s", "fixed_delay_s", "improvement_pct"]].reset_index(drop=True)


def format_table(table: pd.DataFrame, precision: int = 2) -> str:
    """Aligned text rendering of a result table."""
    if table.empty:
        return "(no results)"
    return table.to_string(index=False, float_format=lambda x: f"{x:.{precision}f}")


def write_results(results: Iterable[RunResult], path: str):
    """Write one CSV row per run."""
    results_frame(results)[RESULT_COLUMNS].to_csv(path, index=False)


def read_results(path: str) -> List[RunResult]:
    frame = pd.read_csv(path)
    missing = [c for c in RESULT_COLUMNS if c not in frame.columns]
    if missing:
        raise ConfigurationError(f"{path} lacks columns {missing}", field="results")
    return [
        RunResult(
            scenario=str(row.scenario),
            seed=int(row.seed),
            controller=str(row.controller),
            demand=str(row.demand),
            interval=float(row.interval),
            penetration=float(row.penetration),
            vehicles=int(row.vehicles),
            mean_delay_s=float(row.mean_delay_s),
            std_delay_s=float(row.std_delay_s),
        )
        for row in frame.itertuples(index=False)
    ]
