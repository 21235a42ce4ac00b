import logging
import time
import sys

import click
import click_log

from ..utils.constants import EXIT_VERIFY_FAILED
from ..utils.selfcheck import SUITES, run_suites

logging.basicConfig(stream=sys.stderr)
logger = logging.getLogger("verify")
click_log.basic_config(logger)


@click.command(name=logger.name)
@click_log.simple_verbosity_option(logger)
@click.option(
    "-s",
    "--suite",
    "suites",
    multiple=True,
    type=click.Choice(list(SUITES)),
    help="suite to run (repeatable)  [default: all suites]",
)
@click.option(
    "--seed",
    default=0,
    show_default=True,
    type=click.IntRange(min=0),
    help="random seed for the property checks",
)
def main(suites, seed):
    """Run the self-check suites: encodings, call stack, gradients and oracles."""

    t_start = time.time()

    logger.info("Invoked via: stepwise %s", " ".join(sys.argv[1:]))

    results = run_suites(list(suites), seed)
    failed = 0
    for r in results:
        click.echo(f"{r.name:<14} passed {r.passed:>2}  failed {r.failed:>2}")
        for failure in r.failures:
            logger.error("%s: %s", r.name, failure)
        failed += r.failed

    logger.info(f"Done. Elapsed time: %2.2fs.", time.time() - t_start)

    if failed:
        logger.error("%d check(s) failed", failed)
        sys.exit(EXIT_VERIFY_FAILED)
