import logging
import time
import sys
import os

import click
import click_log

import multiprocessing as mp

from ..utils import file_utils
from ..utils.constants import (
    QUERY_MODES,
    QUERY_MIXED,
    EXIT_USAGE,
    EXIT_MISSING_CHECKPOINT,
    DEFAULT_RUN_ROOT,
    DEFAULT_EVAL_EPISODES,
    REPORT_NAME,
)
from ..utils.config import parse_size_list
from ..utils.tasks import CapRule, get_interface
from ..utils.policy import PolicyAgent
from ..utils.checkpoint import CheckpointError, load_checkpoint
from ..utils.bench import evaluate

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("eval")
click_log.basic_config(logger)


@click.command(name=logger.name)
@click_log.simple_verbosity_option(logger)
@click.option(
    "-s",
    "--sizes",
    default="5,10,20",
    show_default=True,
    type=str,
    help="comma-separated instance sizes (entries may be lo-hi ranges)",
)
@click.option(
    "-n",
    "--episodes",
    default=DEFAULT_EVAL_EPISODES,
    show_default=True,
    type=click.IntRange(min=1),
    help="number of fresh instances per size",
)
@click.option(
    "--seed",
    type=click.IntRange(min=0),
    help="random seed  [default: a fresh seed, recorded in the manifest]",
)
@click.option(
    "--cap-rule",
    type=click.Choice(CapRule.KINDS),
    help="episode cap as value*n^2, an absolute value, or value*n  [default: the interface's own rule]",
)
@click.option(
    "--cap-value",
    type=click.IntRange(min=1),
    help="value used by --cap-rule",
)
@click.option(
    "-q",
    "--query-mode",
    default=QUERY_MIXED,
    show_default=True,
    type=click.Choice(QUERY_MODES),
    help="search queries: members of the array, non-members, or a fair mix",
)
@click.option(
    "--greedy/--sample",
    default=True,
    show_default=True,
    help="decode the policy greedily or sample from it",
)
@click.option(
    "--allow-long",
    is_flag=True,
    default=False,
    show_default=True,
    help="Allow instance sizes of 10000 and above.",
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
@click.argument("checkpoint", type=click.Path())
def main(sizes, episodes, seed, cap_rule, cap_value, query_mode, greedy, allow_long, threads, run_root, checkpoint):
    """Evaluate a trained policy on fresh instances."""

    t_start = time.time()

    logger.info("Invoked via: stepwise %s", " ".join(sys.argv[1:]))

    threads = mp.cpu_count() if threads <= 0 or threads > mp.cpu_count() else threads
    logger.info(f"Running with {threads} worker thread(s)")

    try:
        sizes = parse_size_list(sizes)
        cap = CapRule.from_options(cap_rule, cap_value)
    except ValueError as ex:
        raise click.UsageError(str(ex))

    try:
        loaded = load_checkpoint(checkpoint)
    except FileNotFoundError:
        logger.error(f"Checkpoint not found: {checkpoint}")
        sys.exit(EXIT_MISSING_CHECKPOINT)
    except CheckpointError as ex:
        logger.error(str(ex))
        sys.exit(EXIT_MISSING_CHECKPOINT)

    interface = loaded.policy.interface
    logger.info("Loaded a %s policy for %s (%d parameters)", loaded.policy.kind, interface,
                loaded.policy.num_parameters)

    seed = file_utils.new_seed() if seed is None else seed
    logger.info("Seed: %d", seed)

    agent = PolicyAgent(loaded.policy, greedy=greedy, name=os.path.basename(checkpoint))
    try:
        report = evaluate(agent, interface, sizes, episodes=episodes, cap_rule=cap, seed=seed, threads=threads,
                          query_mode=query_mode, allow_long=allow_long)
    except ValueError as ex:
        logger.error(str(ex))
        sys.exit(EXIT_USAGE)

    run_dir = file_utils.RunDirectory(run_root, logger.name)
    report.to_csv(run_dir.add_artifact("report", REPORT_NAME))
    click.echo(report.table().to_string())

    run_dir.write_manifest(
        dict(checkpoint=os.path.abspath(checkpoint), interface=interface, sizes=sizes, episodes=episodes,
             cap_rule=str(cap or get_interface(interface).cap_rule), query_mode=query_mode, greedy=greedy),
        seed,
    )

    logger.info(f"Done. Elapsed time: %2.2fs.", time.time() - t_start)
