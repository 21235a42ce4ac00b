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
    TRAINING_LOG_NAME,
    CHECKPOINT_NAME,
)
from ..utils.config import ConfigError, TrainConfig
from ..utils.teachers import TEACHERS
from ..utils.training import train_bc
from ..utils.checkpoint import save_checkpoint

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("train-bc")
click_log.basic_config(logger)


@click.command(name=logger.name)
@click_log.simple_verbosity_option(logger)
@click.option(
    "-c",
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    help="training config file (key = value lines)",
)
@click.option(
    "-i",
    "--interface",
    type=click.Choice(INTERFACES),
    help="interface to train on  [default: from the config, else bubble-insertion]",
)
@click.option(
    "--teacher",
    type=click.Choice(sorted(TEACHERS)),
    help="teacher to imitate  [default: the interface's teacher]",
)
@click.option(
    "-e",
    "--epochs",
    type=click.IntRange(min=0),
    help="number of epochs, each over freshly generated teacher traces",
)
@click.option(
    "--seed",
    type=click.IntRange(min=0),
    help="random seed  [default: a fresh seed, recorded in the manifest]",
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
def main(config_path, interface, teacher, epochs, seed, threads, run_root):
    """Behaviour-clone a teacher into a fresh policy."""

    t_start = time.time()

    logger.info("Invoked via: stepwise %s", " ".join(sys.argv[1:]))

    threads = mp.cpu_count() if threads <= 0 or threads > mp.cpu_count() else threads
    logger.info(f"Running with {threads} worker thread(s)")

    try:
        config = TrainConfig.load(config_path, interface=interface, teacher=teacher, bc_epochs=epochs, seed=seed)
    except ConfigError as ex:
        logger.error(f"Bad configuration: {ex}")
        sys.exit(EXIT_BAD_CONFIG)

    if config.seed is None:
        config.set("seed", file_utils.new_seed())
    logger.info("Seed: %d", config.seed)

    run_dir = file_utils.RunDirectory(run_root, logger.name)
    with open(run_dir.add_artifact("config", "config.txt"), "w") as f:
        f.write(config.to_config_text())

    result = train_bc(config, threads=threads, log_path=run_dir.add_artifact("training_log", TRAINING_LOG_NAME))

    validation = {}
    if result.best is not None:
        _, policy_state, _, validation = result.best
        result.policy.load_state_dict(policy_state)
        logger.info("Best validation: solve rate %.1f%%, mean length %.1f (epoch %d)",
                    validation["solve_rate"], validation["mean_length"], validation["epoch"])

    checkpoint_path = run_dir.add_artifact("checkpoint", CHECKPOINT_NAME)
    save_checkpoint(checkpoint_path, result.policy, metadata=dict(
        stage="bc", config=config.to_dict(), validation={k: float(v) for k, v in validation.items()}
    ))
    logger.info("Wrote checkpoint to %s", checkpoint_path)

    run_dir.write_manifest(config.to_dict(), config.seed)

    logger.info(f"Done. Elapsed time: %2.2fs.", time.time() - t_start)
