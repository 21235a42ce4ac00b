import logging
import time
import sys
import os

import click
import click_log

import multiprocessing as mp

from ..utils import file_utils
from ..utils.constants import (
    TASKS,
    TASK_SEARCH,
    EXIT_USAGE,
    QUERY_MODES,
    QUERY_MIXED,
    DEFAULT_RUN_ROOT,
    DEFAULT_EVAL_EPISODES,
    REPORT_NAME,
    TRACES_DIR,
)
from ..utils.config import parse_size_list
from ..utils.tasks import CapRule, get_interface, resolve_interface, make_agent
from ..utils.teachers import TEACHERS
from ..utils.bench import EvalReport, evaluate, record_episode

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("teach")
click_log.basic_config(logger)

QUERY_ALL = "all"
SENSITIVITY_NAME = "sensitivity.csv"


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
    type=click.Choice(QUERY_MODES + (QUERY_ALL,)),
    help="search queries; 'all' evaluates every sampler and writes a sensitivity table",
)
@click.option(
    "--traces",
    default=0,
    show_default=True,
    type=click.IntRange(min=0),
    help="export the first N episodes of every size as JSON-lines traces",
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
@click.argument("task", type=click.Choice(TASKS))
@click.argument("agent", type=click.Choice(sorted(TEACHERS) + ["random"]))
def main(sizes, episodes, seed, cap_rule, cap_value, query_mode, traces, allow_long, threads, run_root, task,
         agent):
    """Benchmark a scripted agent: solve rate and mean episode length per size."""

    t_start = time.time()

    logger.info("Invoked via: stepwise %s", " ".join(sys.argv[1:]))

    threads = mp.cpu_count() if threads <= 0 or threads > mp.cpu_count() else threads
    logger.info(f"Running with {threads} worker thread(s)")

    try:
        sizes = parse_size_list(sizes)
        cap = CapRule.from_options(cap_rule, cap_value)
        interface = resolve_interface(task, agent)
    except ValueError as ex:
        raise click.UsageError(str(ex))

    seed = file_utils.new_seed() if seed is None else seed
    logger.info("Seed: %d", seed)

    modes = QUERY_MODES if query_mode == QUERY_ALL else (query_mode,)
    if task != TASK_SEARCH and query_mode != QUERY_MIXED:
        logger.warning("Query modes only apply to search; ignoring --query-mode %s", query_mode)
        modes = (QUERY_MIXED,)
    runner = make_agent(agent, interface)

    try:
        reports = [
            evaluate(runner, interface, sizes, episodes=episodes, cap_rule=cap, seed=seed, threads=threads,
                     query_mode=mode, allow_long=allow_long, agent_name=agent)
            for mode in modes
        ]
    except ValueError as ex:
        logger.error(str(ex))
        sys.exit(EXIT_USAGE)
    report = EvalReport.concat(reports)

    run_dir = file_utils.RunDirectory(run_root, logger.name)
    report.to_csv(run_dir.add_artifact("report", REPORT_NAME))
    if len(modes) > 1:
        report.pivot("mean_length").to_csv(run_dir.add_artifact("sensitivity", SENSITIVITY_NAME))

    if traces:
        cap = cap or get_interface(interface).cap_rule
        trace_dir = run_dir.file(TRACES_DIR)
        os.makedirs(trace_dir, exist_ok=True)
        for mode in modes:
            for n in sizes:
                for idx in range(min(traces, episodes)):
                    instance, trace = record_episode(runner, interface, n, idx, seed, cap.cap(n), mode)
                    name = os.path.join(TRACES_DIR, f"{agent}-{mode}-n{n}-{idx}.jsonl")
                    file_utils.write_trace_jsonl(run_dir.file(name), trace, interface, instance)
                    run_dir.artifacts[f"trace:{mode}:{n}:{idx}"] = name
        logger.info("Exported traces to %s", trace_dir)

    click.echo(report.table().to_string())

    run_dir.write_manifest(
        dict(task=task, agent=agent, interface=interface, sizes=sizes, episodes=episodes,
             cap_rule=str(cap or get_interface(interface).cap_rule), query_modes=list(modes)),
        seed,
    )

    logger.info(f"Done. Elapsed time: %2.2fs.", time.time() - t_start)
