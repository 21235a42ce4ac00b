import logging
import time
import sys

import click
import click_log

from ..utils import file_utils
from ..utils.constants import TASKS, QUERY_MODES, QUERY_MIXED, DEFAULT_RUN_ROOT, DEFAULT_EVAL_EPISODES
from ..utils.config import parse_size_list
from ..utils.tasks import resolve_interface, new_task_instance
from ..utils.bench import episode_rng

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("gen")
click_log.basic_config(logger)


@click.command(name=logger.name)
@click_log.simple_verbosity_option(logger)
@click.option(
    "-s",
    "--sizes",
    default="10",
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
    help="number of instances per size",
)
@click.option(
    "--seed",
    type=click.IntRange(min=0),
    help="random seed  [default: a fresh seed, recorded in the manifest]",
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
    "-o",
    "--output",
    type=click.Path(exists=False),
    help="instance file  [default: instances.txt in the run directory]",
)
@click.option(
    "--run-root",
    default=DEFAULT_RUN_ROOT,
    show_default=True,
    type=click.Path(file_okay=False),
    help="directory that holds run directories",
)
@click.option(
    "-f",
    "--force",
    is_flag=True,
    default=False,
    show_default=True,
    help="Force overwrite of the output files if they exist.",
)
@click.argument("task", type=click.Choice(TASKS))
def main(sizes, episodes, seed, query_mode, output, run_root, force, task):
    """Generate task instances.

    For a given seed these are exactly the instances `eval` and `teach` draw."""

    t_start = time.time()

    logger.info("Invoked via: stepwise %s", " ".join(sys.argv[1:]))

    try:
        sizes = parse_size_list(sizes)
    except ValueError as ex:
        raise click.BadParameter(str(ex), param_hint="--sizes")

    if output is not None:
        file_utils.check_for_preexisting_files(output, exist_ok=force)

    seed = file_utils.new_seed() if seed is None else seed
    logger.info("Seed: %d", seed)

    interface = resolve_interface(task, "random")
    states = [
        new_task_instance(interface, n, episode_rng(seed, n, idx), query_mode)
        for n in sizes
        for idx in range(episodes)
    ]

    run_dir = file_utils.RunDirectory(run_root, logger.name)
    if output is None:
        output = run_dir.add_artifact("instances", "instances.txt")
    else:
        run_dir.artifacts["instances"] = output

    file_utils.write_instances(output, task, states)
    logger.info("Wrote %d %s instance(s) to %s", len(states), task, output)

    run_dir.write_manifest(
        dict(task=task, sizes=sizes, episodes=episodes, query_mode=query_mode), seed
    )

    logger.info(f"Done. Elapsed time: %2.2fs.", time.time() - t_start)
