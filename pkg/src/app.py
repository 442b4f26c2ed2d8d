"""
nfjsim command line: run one simulation, sweep failure points, fuzz failure plans.

Exit codes: 0 success, 1 result differs from the sequential oracle,
2 run aborted by the model (store failure, all workers failed), 3 usage error
or a run that stalled (deadlock, step budget exhausted; diagnostics go to stderr).
"""
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import click
from dotenv import load_dotenv
from loguru import logger
from pydantic import BaseModel, Field

from models.errors import InvalidPlan, StepBudgetExceeded, UnknownProgram
from models.program import parse_program_selector
from simulator.engine import Simulator
from simulator.faults import FailurePlan, parse_plan
from simulator.sweeps import (
    FuzzCase,
    exhaustive_single_failure_sweep,
    fuzz,
    multi_failure_grid,
    passed,
    sweep_frame,
)
from utils.config import DEFAULT_SEED, SimConfig
from utils.log import configure_logging

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_ABORTED = 2
EXIT_USAGE = 3


class RunConfig(BaseModel):
    """Everything `run` needs; serialises to JSON and back unchanged."""

    program: str
    p: int = Field(default=4, ge=1)
    seed: int = DEFAULT_SEED
    kills: List[str] = Field(default_factory=list)
    plan_file: Optional[str] = None
    checkpoint_period: int = Field(default=1, ge=1)
    max_network_delay: int = Field(default=5, ge=1)
    trace: bool = True
    audit: bool = False
    output: Optional[str] = None

    def failure_plan(self) -> FailurePlan:
        specs = list(self.kills)
        if self.plan_file:
            lines = Path(self.plan_file).read_text(encoding="utf-8").splitlines()
            specs.extend(line.split("#", 1)[0] for line in lines)
        return parse_plan(specs).check_workers(self.p)

    def sim_config(self) -> SimConfig:
        return SimConfig.from_env(
            checkpoint_period=self.checkpoint_period,
            max_network_delay=self.max_network_delay,
            trace=self.trace,
            audit=self.audit,
        )


def _program(selector: str):
    try:
        return parse_program_selector(selector)
    except UnknownProgram as e:
        raise click.BadParameter(str(e), param_hint="PROGRAM") from e


def _write(text: str, output: Optional[str]):
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=not text.endswith("\n"))


seed_option = click.option(
    "--seed", type=int, default=DEFAULT_SEED, envvar="NFJSIM_SEED", show_default=True, help="master seed"
)
period_option = click.option("-R", "--checkpoint-period", type=click.IntRange(min=1), default=1, show_default=True)
delay_option = click.option("--max-delay", type=click.IntRange(min=1), default=5, show_default=True)


@click.group()
@click.option("--log-level", default=None, envvar="NFJSIM_LOG_LEVEL", help="loguru level (default WARNING)")
def cli(log_level: Optional[str]):
    """Checkpointing and localized recovery for nested fork-join work stealing, simulated."""
    configure_logging(log_level)


@cli.command()
@click.argument("program")
@click.option("-p", "--workers", "p", type=click.IntRange(min=1), default=4, show_default=True)
@seed_option
@click.option("--kill", "kills", multiple=True, help="kill spec, e.g. 1@e10, 1,2@s50, buddy(1)@recovery(1)")
@click.option("--store-fail", default=None, help="store failure spec, e.g. @s200")
@click.option("--plan-file", type=click.Path(exists=True, dir_okay=False), default=None, help="one kill spec per line")
@period_option
@delay_option
@click.option("--trace/--no-trace", default=True)
@click.option("--audit", is_flag=True, help="check frame conservation after every event")
@click.option("-o", "--output", type=click.Path(), default=None, help="report file (default stdout)")
@click.option("--trace-out", type=click.Path(), default=None, help="trace as JSON lines")
@click.option("--store-trace", type=click.Path(), default=None, help="store operation log as JSON lines")
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="RunConfig JSON; replaces the other run options")
def run(program, p, seed, kills, store_fail, plan_file, checkpoint_period, max_delay, trace, audit, output,
        trace_out, store_trace, config_file) -> int:
    """Run PROGRAM (fib:<n> or tree:<b>,<d>[,<cost>]) once and print the report."""
    if config_file:
        config = RunConfig.model_validate_json(Path(config_file).read_text(encoding="utf-8"))
    else:
        config = RunConfig(
            program=program,
            p=p,
            seed=seed,
            kills=list(kills) + ([store_fail] if store_fail else []),
            plan_file=plan_file,
            checkpoint_period=checkpoint_period,
            max_network_delay=max_delay,
            trace=trace or trace_out is not None,
            audit=audit,
            output=output,
        )
    spec, args = _program(config.program)
    try:
        plan = config.failure_plan()
    except InvalidPlan as e:
        raise click.BadParameter(str(e), param_hint="--kill") from e

    sim = Simulator(spec, args, config.p, plan=plan, seed=config.seed, config=config.sim_config())
    report = sim.run()
    if trace_out:
        report.dump_trace(trace_out)
    if store_trace:
        sim.store.dump_ops(store_trace)
    _write(json.dumps(report.summary(), indent=2), config.output)

    if report.aborted:
        logger.warning("[SIM] run aborted: {}", report.result.reason)
        return EXIT_ABORTED
    if not report.ok:
        click.echo(f"result {report.result} differs from sequential {report.oracle}", err=True)
        return EXIT_MISMATCH
    return EXIT_OK


@cli.command()
@click.argument("program")
@click.option("-p", "--workers", "workers", type=click.IntRange(min=1), multiple=True, default=(3,), show_default=True)
@seed_option
@click.option("--single/--no-single", default=True, help="exhaustive single-failure sweep")
@click.option("--multi", type=click.IntRange(min=0), default=0, help="also kill every k-subset of workers together")
@click.option("--points", type=click.IntRange(min=1), default=4, show_default=True, help="kill steps per subset")
@click.option("--check/--no-check", default=True, help="trace checks on re-execution and localization")
@period_option
@delay_option
@click.option("-o", "--output", type=click.Path(), default=None, help="CSV file (default stdout)")
def sweep(program, workers, seed, single, multi, points, check, checkpoint_period, max_delay, output) -> int:
    """Sweep failure points of PROGRAM and write one CSV row per run."""
    spec, args = _program(program)
    config = SimConfig.from_env(checkpoint_period=checkpoint_period, max_network_delay=max_delay, trace=check)
    reports = []
    for p in workers:
        if single:
            reports.extend(exhaustive_single_failure_sweep(spec, args, p, seed=seed, config=config))
        if multi:
            reports.extend(multi_failure_grid(spec, args, p, multi, seed=seed, config=config, points=points))
    _write(sweep_frame(reports).to_csv(index=False), output)

    status = EXIT_OK
    for report in reports:
        if not passed(report):
            click.echo(
                f"witness: p={report.p_initial} plan='{report.plan}' result={report.result} {report.violations}", err=True
            )
            status = EXIT_MISMATCH
    logger.info("[SWEEP] {} runs, exit {}", len(reports), status)
    return status


def replay_hint(program: str, p: int, case: FuzzCase, checkpoint_period: int, max_delay: int) -> str:
    """The `run` command line that reproduces a failing fuzz case."""
    return (
        f"replay: run {program} -p {p} --seed {case.seed} -R {checkpoint_period} --max-delay {max_delay}"
        f" --kill '{case.plan}'"
    )


@cli.command("fuzz")
@click.argument("program")
@click.option("-p", "--workers", "p", type=click.IntRange(min=1), default=5, show_default=True)
@seed_option
@click.option("-n", "--iterations", type=click.IntRange(min=1), default=100, show_default=True)
@period_option
@delay_option
def fuzz_cmd(program, p, seed, iterations, checkpoint_period, max_delay) -> int:
    """Run random failure plans against PROGRAM; prints the first failing seed and plan."""
    spec, args = _program(program)
    config = SimConfig.from_env(checkpoint_period=checkpoint_period, max_network_delay=max_delay)
    summary = fuzz(spec, args, p, iterations, seed=seed, config=config)
    click.echo(json.dumps(summary.model_dump(mode="json"), indent=2))
    first = summary.first_failure
    if first is not None:
        click.echo(replay_hint(program, p, first, checkpoint_period, max_delay), err=True)
        return EXIT_MISMATCH
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    try:
        status = cli.main(args=list(argv) if argv is not None else None, prog_name="nfjsim", standalone_mode=False)
    except click.exceptions.Abort:
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except InvalidPlan as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_USAGE
    except StepBudgetExceeded as e:
        logger.error("[SIM] {}: {}", type(e).__name__, e)
        dump = {"error": type(e).__name__, "message": str(e), "diagnostics": e.diagnostics}
        click.echo(json.dumps(dump, indent=2), err=True)
        return EXIT_USAGE
    return status if isinstance(status, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
