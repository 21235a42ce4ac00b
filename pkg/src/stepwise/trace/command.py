import logging
import time
import sys
import os

import click
import click_log

from ..utils import file_utils
from ..utils.constants import (
    TASKS,
    QUERY_MODES,
    QUERY_MIXED,
    EXIT_USAGE,
    EXIT_MISSING_CHECKPOINT,
    DEFAULT_RUN_ROOT,
    TRACES_DIR,
)
from ..utils.tasks import get_interface, resolve_interface, make_agent
from ..utils.teachers import TEACHERS
from ..utils.policy import PolicyAgent
from ..utils.checkpoint import CheckpointError, load_checkpoint
from ..utils.bench import TraceMismatch, record_episode, render_trace

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("trace")
click_log.basic_config(logger)


@click.command(name=logger.name)
@click_log.simple_verbosity_option(logger)
@click.option(
    "--checkpoint",
    type=click.Path(),
    help="trace a trained policy instead of a scripted agent",
)
@click.option(
    "--replay",
    type=click.Path(exists=True, dir_okay=False),
    help="re-render a JSON-lines trace written earlier instead of running a new episode",
)
@click.option(
    "-n",
    "--size",
    default=10,
    show_default=True,
    type=click.IntRange(min=1),
    help="instance size",
)
@click.option(
    "--index",
    default=0,
    show_default=True,
    type=click.IntRange(min=0),
    help="episode index; (seed, size, index) names the same instance `eval` draws",
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
    "--render",
    is_flag=True,
    default=False,
    show_default=True,
    help="Print a text frame for every step and store the frames in the trace.",
)
@click.option(
    "-o",
    "--output",
    type=click.Path(exists=False),
    help="trace file  [default: traces/trace.jsonl in the run directory]",
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
@click.argument("task", required=False, type=click.Choice(TASKS))
@click.argument("agent", required=False, type=click.Choice(sorted(TEACHERS) + ["random"]))
def main(checkpoint, replay, size, index, seed, query_mode, render, output, run_root, force, task, agent):
    """Record one episode as JSON lines, optionally rendering every step."""

    t_start = time.time()

    logger.info("Invoked via: stepwise %s", " ".join(sys.argv[1:]))

    if replay is not None:
        _replay(replay)
        logger.info(f"Done. Elapsed time: %2.2fs.", time.time() - t_start)
        return

    if (checkpoint is None) == (agent is None):
        raise click.UsageError("Give either TASK AGENT or --checkpoint (but not both).")

    if checkpoint is not None:
        try:
            runner = PolicyAgent(load_checkpoint(checkpoint).policy)
        except FileNotFoundError:
            logger.error(f"Checkpoint not found: {checkpoint}")
            sys.exit(EXIT_MISSING_CHECKPOINT)
        except CheckpointError as ex:
            logger.error(str(ex))
            sys.exit(EXIT_MISSING_CHECKPOINT)
        interface = runner.interface
        name = os.path.basename(checkpoint)
    else:
        try:
            interface = resolve_interface(task, agent)
        except ValueError as ex:
            raise click.UsageError(str(ex))
        runner = make_agent(agent, interface)
        name = agent

    if output is not None:
        file_utils.check_for_preexisting_files(output, exist_ok=force)

    seed = file_utils.new_seed() if seed is None else seed
    logger.info("Seed: %d", seed)

    cap = get_interface(interface).cap_rule.cap(size)
    instance, trace = record_episode(runner, interface, size, index, seed, cap, query_mode)
    logger.info("%s on %s n=%d: %s after %d step(s)", name, interface, size, trace.outcome, len(trace))

    frames = render_trace(trace, instance, interface) if render else None
    if frames:
        click.echo("\n\n".join(frames))

    run_dir = file_utils.RunDirectory(run_root, logger.name)
    if output is None:
        os.makedirs(run_dir.file(TRACES_DIR), exist_ok=True)
        output = run_dir.add_artifact("trace", os.path.join(TRACES_DIR, "trace.jsonl"))
    else:
        run_dir.artifacts["trace"] = output
    file_utils.write_trace_jsonl(output, trace, interface, instance, frames=frames)
    logger.info("Wrote trace to %s", output)

    run_dir.write_manifest(
        dict(agent=name, interface=interface, size=size, index=index, query_mode=query_mode, cap=cap,
             render=render),
        seed,
    )

    logger.info(f"Done. Elapsed time: %2.2fs.", time.time() - t_start)


def _replay(path):
    try:
        loaded = file_utils.read_trace_jsonl(path)
        frames = render_trace(loaded.trace, loaded.instance, loaded.interface, loaded.reward_mode,
                              loaded.step_penalty)
    except (TraceMismatch, ValueError, KeyError) as ex:
        logger.error(f"Cannot replay {path}: {ex}")
        sys.exit(EXIT_USAGE)
    click.echo("\n\n".join(frames))
    logger.info("Replayed %d step(s) on %s", len(loaded.trace), loaded.interface)
