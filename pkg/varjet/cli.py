from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from varjet import __version__, service
from varjet.config import LOG_LEVELS, VarjetConfig
from varjet.documents import load_riccati, load_system
from varjet.errors import ConfigError, VarjetError
from varjet.job_runner import SampleRunner
from varjet.report import build_report, emit_report, to_plain
from varjet.varflow import IntegratorConfig

logger = logging.getLogger(__name__)

EXIT_CODES_HELP = """exit codes:
  0  success (detection verdicts are report content, never failures)
  1  selftest property violation
  2  usage or configuration error
  3  invalid document, shape, order or dimension
  4  solution blow-up
  5  pole or pole crossed by the lift denominator
  6  singular or ill-conditioned matrix
  7  report could not be written

vectors are comma separated; write negative values as --xi=-1,0.5"""


class Scenario(BaseModel):
    model_config = ConfigDict(extra="ignore")

    command: Literal["selftest", "flow", "verify-allwright", "verify-eq8", "scalar", "detect-riccati", "frac-linear"]
    system: str | None = None
    riccati: str | None = None
    tau: float = 0.0
    xi: list[float] | None = None
    h: list[float] | None = None
    t: float | None = None
    window: list[tuple[float, float]] | None = None
    mode: Literal["structural", "flow", "both"] = "both"
    step: float | None = Field(default=None, gt=0)
    max_norm: float | None = Field(default=None, gt=0)
    richardson: bool = False
    tol: float | None = Field(default=None, gt=0)
    seed: int | None = Field(default=None, ge=0)
    sample_count: int | None = Field(default=None, ge=1)
    workers: int | None = Field(default=None, ge=1)
    instances: int = Field(default=500, ge=1)
    output: str | None = None
    csv: str | None = None


def _vector_arg(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma separated vector: {text!r}") from exc


def _window_arg(text: str) -> tuple[float, float]:
    values = _vector_arg(text)
    if len(values) != 2:
        raise argparse.ArgumentTypeError(f"window needs start,end: {text!r}")
    return values[0], values[1]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--step", type=float, help="fixed integration step (default VARJET_STEP)")
    common.add_argument("--max-norm", type=float, help="blow-up guard on |phi| (default VARJET_MAX_NORM)")
    common.add_argument("--richardson", action="store_true", help="rerun at half step and report the difference")
    common.add_argument("--seed", type=int)
    common.add_argument("--output", help="report path (default VARJET_REPORT_DIR/<command>.json)")
    common.add_argument("--csv", help="also write t,residual,scale rows to this path")
    common.add_argument("--log-level", type=str.upper, choices=LOG_LEVELS)

    parser = argparse.ArgumentParser(
        prog="varjet",
        description="Flow jets, generalized Allwright identity and vector Riccati detection.",
        epilog=EXIT_CODES_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"varjet {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return commands.add_parser(
            name,
            parents=[common],
            help=help_text,
            epilog=EXIT_CODES_HELP,
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )

    selftest = add("selftest", "run the seeded Kronecker / c-symmetry property suite")
    selftest.add_argument("--instances", type=int, default=500)

    for name, help_text in (
        ("flow", "flow jets at t (directional when --h is given)"),
        ("verify-allwright", "both sides of the generalized Allwright identity"),
        ("verify-eq8", "second-order integral formula residual"),
        ("scalar", "scalar formulas and Schwarzian cross-identities (n = 1)"),
    ):
        sub = add(name, help_text)
        sub.add_argument("--system", required=True)
        sub.add_argument("--tau", type=float, default=0.0)
        sub.add_argument("--xi", type=_vector_arg, required=True)
        sub.add_argument("--t", type=float, required=True)
        if name in {"flow", "verify-allwright"}:
            sub.add_argument("--h", type=_vector_arg)
        if name != "flow":
            sub.add_argument("--tol", type=float)

    detect = add("detect-riccati", "structural and flow-based vector Riccati detection")
    detect.add_argument("--system", required=True)
    detect.add_argument("--mode", choices=["structural", "flow", "both"], default="both")
    detect.add_argument("--tau", type=float, default=0.0)
    detect.add_argument("--window", type=_window_arg, action="append", help="start,end (repeatable)")
    detect.add_argument("--sample-count", type=int)
    detect.add_argument("--workers", type=int)
    detect.add_argument("--tol", type=float)

    frac = add("frac-linear", "fractional linear solution through the linear lift")
    frac.add_argument("--riccati", required=True)
    frac.add_argument("--tau", type=float, default=0.0)
    frac.add_argument("--xi", type=_vector_arg, required=True)
    frac.add_argument("--t", type=float, required=True)
    frac.add_argument("--tol", type=float)
    return parser


def _scenario(args: argparse.Namespace) -> Scenario:
    try:
        return Scenario.model_validate(vars(args))
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        raise ConfigError(f"--{field.replace('_', '-')}: {first['msg']}") from exc


def run(scenario: Scenario, config: VarjetConfig, runner: SampleRunner | None = None) -> service.CommandResult:
    cfg = IntegratorConfig.from_config(
        config, step=scenario.step, max_norm=scenario.max_norm, richardson=scenario.richardson
    )
    seed = config.seed if scenario.seed is None else scenario.seed
    command = scenario.command

    def with_tol(default: float) -> float:
        return default if scenario.tol is None else scenario.tol

    if command == "selftest":
        return service.selftest(seed=seed, instances=scenario.instances)
    if command == "frac-linear":
        rc = load_riccati(scenario.riccati)
        return service.frac_linear(rc, scenario.tau, scenario.xi, scenario.t, cfg, with_tol(service.FRAC_TOLERANCE))

    sys_ = load_system(scenario.system)
    if command == "flow":
        return service.flow(sys_, scenario.tau, scenario.xi, scenario.t, cfg, scenario.h)
    if command == "verify-allwright":
        return service.verify_allwright(
            sys_, scenario.tau, scenario.xi, scenario.t, cfg, scenario.h, with_tol(service.ALLWRIGHT_TOLERANCE)
        )
    if command == "verify-eq8":
        return service.verify_eq8(sys_, scenario.tau, scenario.xi, scenario.t, cfg, with_tol(service.EQ8_TOLERANCE))
    if command == "scalar":
        return service.scalar(sys_, scenario.tau, scenario.xi, scenario.t, cfg, with_tol(service.SCALAR_TOLERANCE))

    own = None if scenario.workers is None else SampleRunner(max_workers=scenario.workers)
    try:
        return service.detect_riccati(
            sys_,
            scenario.mode,
            scenario.tau,
            cfg,
            windows=scenario.window,
            sample_count=scenario.sample_count or config.sample_count,
            tol=with_tol(config.detect_tol),
            seed=seed,
            runner=own or runner,
        )
    finally:
        if own is not None:
            own.shutdown()


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        from varjet import app_state
    except ValueError as exc:
        print(json.dumps(ConfigError(str(exc)).to_dict()), file=sys.stderr)
        return ConfigError.exit_code

    config = app_state.config
    logging.basicConfig(
        level=args.log_level or config.log_level, format="%(levelname)s %(name)s %(message)s"
    )
    try:
        scenario = _scenario(args)
        result = run(scenario, config, app_state.sample_runner)
        inputs = [p for p in (scenario.system, scenario.riccati) if p]
        seed = config.seed if scenario.seed is None else scenario.seed
        document = build_report(
            result.command,
            result.results,
            inputs=inputs,
            seed=seed if result.command in {"selftest", "detect-riccati"} else None,
            tolerances=result.tolerances,
            verdicts=result.verdicts,
        )
        output = Path(scenario.output or Path(config.report_dir) / f"{result.command}.json")
        emit_report(document, output, result.rows, scenario.csv)
    except VarjetError as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(json.dumps(to_plain(exc.to_dict()), ensure_ascii=False), file=sys.stderr)
        return exc.exit_code

    print(json.dumps({"command": result.command, "report": str(output), "verdicts": to_plain(result.verdicts)}))
    return 1 if result.failed else 0
