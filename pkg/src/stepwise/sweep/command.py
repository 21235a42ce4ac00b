import logging
import time
import sys

import click
import click_log

import multiprocessing as mp

from ..utils import file_utils
from ..utils.constants import (
    INTERFACES,
    EXIT_BAD_CONFIG,
    DEFAULT_RUN_ROOT,
    LEADERBOARD_NAME,
    CURVES_NAME,
)
from ..utils.config import ConfigError, TrainConfig, SWEEP_GRID
from ..utils.tasks import make_agent
from ..utils.bench import evaluate
from ..utils.training import SWEEP_KEYS, run_sweep, sweep_cells, plot_training_curves

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("sweep")
click_log.basic_config(logger)


def _number_list(text, kind):
    try:
        return [kind(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}")


@click.command(name=logger.name)
@click_log.simple_verbosity_option(logger)
@click.option(
    "-c",
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    help="base training config file (key = value lines)",
)
@click.option(
    "-i",
    "--interface",
    type=click.Choice(INTERFACES),
    help="interface to train on  [default: from the config, else bubble-insertion]",
)
@click.option("--lr", type=str, help="comma-separated learning rates  [default: the interface's sweep set]")
@click.option("--gamma", type=str, help="comma-separated discounts  [default: the interface's sweep set]")
@click.option("--entropy", type=str, help="comma-separated entropy weights  [default: the interface's sweep set]")
@click.option("--nsteps", type=str, help="comma-separated n-step horizons  [default: the interface's sweep set]")
@click.option(
    "--seeds",
    default="0,1",
    show_default=True,
    type=str,
    help="comma-separated training seeds; every cell is trained once per seed",
)
@click.option(
    "-u",
    "--updates",
    type=click.IntRange(min=1),
    help="learner updates per training run  [default: from the config]",
)
@click.option(
    "--allow-off-grid",
    is_flag=True,
    default=False,
    show_default=True,
    help="Allow hyperparameter values outside the interface's sweep set.",
)
@click.option(
    "-t",
    "--threads",
    type=int,
    default=mp.cpu_count() - 1,
    show_default=True,
    help="number of threads to use (0 for all)",
)
@click.option(
    "--run-root",
    default=DEFAULT_RUN_ROOT,
    show_default=True,
    type=click.Path(file_okay=False),
    help="directory that holds run directories",
)
def main(config_path, interface, lr, gamma, entropy, nsteps, seeds, updates, allow_off_grid, threads, run_root):
    """Grid-search policy-gradient hyperparameters and rank the cells."""

    t_start = time.time()

    logger.info("Invoked via: stepwise %s", " ".join(sys.argv[1:]))

    threads = mp.cpu_count() if threads <= 0 or threads > mp.cpu_count() else threads
    logger.info(f"Running with {threads} worker thread(s)")

    seeds = _number_list(seeds, int)
    try:
        config = TrainConfig.load(config_path, interface=interface, updates=updates)
    except ConfigError as ex:
        logger.error(f"Bad configuration: {ex}")
        sys.exit(EXIT_BAD_CONFIG)

    grid = dict(SWEEP_GRID[config.interface])
    for key, text, kind in zip(SWEEP_KEYS, (lr, gamma, entropy, nsteps), (float, float, float, int)):
        if text is not None:
            grid[key] = _number_list(text, kind)
    cells = sweep_cells(grid)
    logger.info("Grid: %s", ", ".join(f"{k}={grid[k]}" for k in SWEEP_KEYS))

    run_dir = file_utils.RunDirectory(run_root, logger.name)
    try:
        result = run_sweep(config, grid, seeds, threads=threads, run_dir=run_dir.path,
                           allow_off_grid=allow_off_grid)
    except ConfigError as ex:
        logger.error(f"Bad sweep grid: {ex}")
        sys.exit(EXIT_BAD_CONFIG)

    result.leaderboard.to_csv(run_dir.add_artifact("leaderboard", LEADERBOARD_NAME), index=False)
    for c in result.curves:
        run_dir.artifacts[f"cell-{c}"] = f"cell-{c}"

    if result.curves:
        teacher = make_agent(config.teacher, config.interface)
        hi = config.sizes[1]
        reference = evaluate(teacher, config.interface, [hi], episodes=config.eval_episodes,
                             cap_rule=config.cap_rule, seed=config.seed or 0, progress=False)
        plot_training_curves(result.curves, cells, run_dir.add_artifact("curves", CURVES_NAME),
                             reference_length=reference.rows[0]["mean_length"])

        top = result.leaderboard.iloc[0]
        logger.info("Best cell %d: %s (solve rate %.1f%%, mean length %.1f)", top["cell"],
                    ", ".join(f"{k}={top[k]}" for k in SWEEP_KEYS), top["cell_solve_rate"],
                    top["cell_mean_length"])
        click.echo(result.leaderboard.to_string(index=False))

    run_dir.write_manifest(dict(config.to_dict(), grid=grid, seeds=seeds), seeds[0] if seeds else None)

    logger.info(f"Done. Elapsed time: %2.2fs.", time.time() - t_start)
