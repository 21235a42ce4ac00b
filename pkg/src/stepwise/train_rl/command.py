import logging
import time
import sys

import click
import click_log

import multiprocessing as mp

from ..utils import file_utils
from ..utils.constants import (
    INTERFACES,
    REWARD_MODES,
    EXIT_BAD_CONFIG,
    EXIT_MISSING_CHECKPOINT,
    DEFAULT_RUN_ROOT,
    TRAINING_LOG_NAME,
    CHECKPOINT_NAME,
)
from ..utils.config import ConfigError, TrainConfig
from ..utils.training import train_rl
from ..utils.checkpoint import CheckpointError, load_checkpoint, save_checkpoint

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("train-rl")
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
    "-u",
    "--updates",
    type=click.IntRange(min=0),
    help="number of learner updates",
)
@click.option(
    "--imitation/--no-imitation",
    default=None,
    help="add the teacher-imitation term to the policy-gradient loss  [default: from the config, else on]",
)
@click.option(
    "--reward-mode",
    type=click.Choice(REWARD_MODES),
    help="sparse terminal reward or orderedness shaping (sorting only)",
)
@click.option(
    "--init-checkpoint",
    type=click.Path(),
    help="start from the parameters in this checkpoint (e.g. a train-bc result)",
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
def main(config_path, interface, updates, imitation, reward_mode, init_checkpoint, seed, threads, run_root):
    """Train a policy with actor/learner policy gradient."""

    t_start = time.time()

    logger.info("Invoked via: stepwise %s", " ".join(sys.argv[1:]))

    threads = mp.cpu_count() if threads <= 0 or threads > mp.cpu_count() else threads
    logger.info(f"Running with {threads} worker thread(s)")

    try:
        config = TrainConfig.load(config_path, interface=interface, updates=updates, imitation=imitation,
                                  reward_mode=reward_mode, seed=seed)
    except ConfigError as ex:
        logger.error(f"Bad configuration: {ex}")
        sys.exit(EXIT_BAD_CONFIG)

    policy = baseline = None
    if init_checkpoint is not None:
        try:
            start = load_checkpoint(init_checkpoint)
        except (FileNotFoundError, CheckpointError) as ex:
            logger.error(f"Cannot load checkpoint {init_checkpoint}: {ex}")
            sys.exit(EXIT_MISSING_CHECKPOINT)
        if start.policy.interface != config.interface:
            logger.error(f"Checkpoint {init_checkpoint} holds a {start.policy.interface} policy, "
                         f"but the run trains on {config.interface}")
            sys.exit(EXIT_BAD_CONFIG)
        policy, baseline = start.policy, start.baseline
        logger.info("Starting from %s", init_checkpoint)

    if config.seed is None:
        config.set("seed", file_utils.new_seed())
    logger.info("Seed: %d", config.seed)

    run_dir = file_utils.RunDirectory(run_root, logger.name)
    with open(run_dir.add_artifact("config", "config.txt"), "w") as f:
        f.write(config.to_config_text())

    result = train_rl(config, policy=policy, baseline=baseline, threads=threads,
                      log_path=run_dir.add_artifact("training_log", TRAINING_LOG_NAME))

    validation = {}
    if result.best is not None:
        _, policy_state, baseline_state, validation = result.best
        result.policy.load_state_dict(policy_state)
        result.baseline.load_state_dict(baseline_state)
        logger.info("Best validation: solve rate %.1f%%, mean length %.1f (update %d)",
                    validation["solve_rate"], validation["mean_length"], validation["update"])

    checkpoint_path = run_dir.add_artifact("checkpoint", CHECKPOINT_NAME)
    save_checkpoint(checkpoint_path, result.policy, result.baseline, metadata=dict(
        stage="rl", config=config.to_dict(), init_checkpoint=init_checkpoint,
        validation={k: float(v) for k, v in validation.items()},
    ))
    logger.info("Wrote checkpoint to %s", checkpoint_path)

    run_dir.write_manifest(config.to_dict(), config.seed)

    logger.info(f"Done. Elapsed time: %2.2fs.", time.time() - t_start)
