from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np

from varjet.csym import is_csymmetric
from varjet.errors import ShapeError
from varjet.identities import allwright_sides, eq8_check, scalar_formulas
from varjet.job_runner import SampleRunner
from varjet.matkron import as_vector
from varjet.properties import run_selftest
from varjet.riccati import detect_flow, frac_solution, roundtrip_theorem61
from varjet.sysmodel import PolySystem, RiccatiCoeffs, riccati_to_system, system_to_riccati
from varjet.varflow import IntegratorConfig, integrate_directional, integrate_flow, integrate_jets

logger = logging.getLogger(__name__)

ALLWRIGHT_TOLERANCE = 1e-6
EQ8_TOLERANCE = 1e-6
SCALAR_TOLERANCE = 1e-6
FRAC_TOLERANCE = 1e-6
DEFAULT_WINDOW = 0.3

Row = tuple[float, float, float]


@dataclass
class CommandResult:
    command: str
    results: dict[str, Any]
    verdicts: dict[str, Any] = field(default_factory=dict)
    tolerances: dict[str, float] = field(default_factory=dict)
    rows: list[Row] | None = None
    failed: bool = False


def _vector(value: Sequence[float] | None, n: int, name: str) -> np.ndarray:
    if value is None:
        raise ShapeError(f"{name} is required")
    vec = as_vector(value, name)
    if vec.size != n:
        raise ShapeError(f"{name} has {vec.size} entries, system dimension is {n}")
    return vec


def _unit_direction(value: Sequence[float] | None, n: int) -> np.ndarray:
    if value is None:
        return np.ones(n) / np.sqrt(n)
    return _vector(value, n, "h")


def selftest(seed: int = 0, instances: int = 500) -> CommandResult:
    checks = run_selftest(seed=seed, instances=instances, polarize_instances=max(1, (instances * 2) // 5))
    passed = all(check.passed for check in checks)
    logger.info("selftest seed=%s passed=%s checks=%s", seed, passed, len(checks))
    return CommandResult(
        command="selftest",
        results={"checks": [check.to_dict() for check in checks]},
        verdicts={"passed": passed},
        tolerances={check.name: check.tolerance for check in checks},
        failed=not passed,
    )


def flow(
    sys: PolySystem,
    tau: float,
    xi: Sequence[float],
    t: float,
    cfg: IntegratorConfig,
    h: Sequence[float] | None = None,
) -> CommandResult:
    start = _vector(xi, sys.n, "xi")
    if h is None:
        traj = integrate_jets(sys, tau, start, t, cfg)
        jet = traj.final
        results = {
            "t": jet.t,
            "samples": len(traj),
            "phi": jet.phi,
            "Dphi": jet.Dphi,
            "D2phi": jet.D2phi,
            "D3phi": jet.D3phi,
            "csymViolation": {
                "D2phi": is_csymmetric(jet.D2phi, sys.n, 2).violation,
                "D3phi": is_csymmetric(jet.D3phi, sys.n, 3).violation,
            },
        }
    else:
        traj = integrate_directional(sys, tau, start, _vector(h, sys.n, "h"), t, cfg, accumulate=False)
        jet = traj.final
        results = {"t": jet.t, "samples": len(traj), "phi": jet.phi, "u1": jet.u1, "u2": jet.u2, "u3": jet.u3}
    results["richardsonError"] = traj.richardson_error
    return CommandResult(command="flow", results=results)


def verify_allwright(
    sys: PolySystem,
    tau: float,
    xi: Sequence[float],
    t: float,
    cfg: IntegratorConfig,
    h: Sequence[float] | None = None,
    tol: float = ALLWRIGHT_TOLERANCE,
) -> CommandResult:
    traj = integrate_directional(sys, tau, _vector(xi, sys.n, "xi"), _unit_direction(h, sys.n), t, cfg)
    report = allwright_sides(traj)
    logger.info("allwright max normalized residual=%.3e samples=%s", report.max_normalized, len(traj))
    return CommandResult(
        command="verify-allwright",
        results={
            "t": report.t,
            "residualNorm": report.residual_norm,
            "scale": report.scale,
            "maxResidual": float(report.residual_norm.max()) if report.t.size else 0.0,
            "maxNormalized": report.max_normalized,
            "maxScale": float(report.scale.max()) if report.t.size else 0.0,
            "i2Max": report.i2_max,
            "richardsonError": traj.richardson_error,
        },
        verdicts={"identityHolds": report.max_normalized <= tol},
        tolerances={"allwright": tol},
        rows=list(zip(report.t.tolist(), report.residual_norm.tolist(), report.scale.tolist())),
    )


def verify_eq8(
    sys: PolySystem, tau: float, xi: Sequence[float], t: float, cfg: IntegratorConfig, tol: float = EQ8_TOLERANCE
) -> CommandResult:
    traj = integrate_jets(sys, tau, _vector(xi, sys.n, "xi"), t, cfg, with_integral=True)
    report = eq8_check(traj)
    return CommandResult(
        command="verify-eq8",
        results={"t": report.t, "residual": report.residual, "maxResidual": report.max_residual},
        verdicts={"identityHolds": report.max_residual <= tol},
        tolerances={"eq8": tol},
        rows=list(zip(report.t.tolist(), report.residual.tolist(), report.scale.tolist())),
    )


def scalar(
    sys: PolySystem, tau: float, xi: Sequence[float], t: float, cfg: IntegratorConfig, tol: float = SCALAR_TOLERANCE
) -> CommandResult:
    start = float(_vector(xi, sys.n, "xi")[0]) if sys.n == 1 else 0.0
    formulas = scalar_formulas(sys, tau, start, t, cfg)
    residuals = formulas.residuals()
    return CommandResult(
        command="scalar",
        results={"values": formulas, "residuals": residuals},
        verdicts={name: value <= tol for name, value in residuals.items()},
        tolerances={"scalar": tol},
    )


def detect_riccati(
    sys: PolySystem,
    mode: Literal["structural", "flow", "both"],
    tau: float,
    cfg: IntegratorConfig,
    *,
    windows: Sequence[tuple[float, float]] | None = None,
    sample_count: int = 8,
    tol: float = 1e-7,
    seed: int = 0,
    runner: SampleRunner | None = None,
) -> CommandResult:
    results: dict[str, Any] = {"mode": mode}
    verdicts: dict[str, Any] = {}
    if mode in {"structural", "both"}:
        rc = system_to_riccati(sys)
        verdicts["structural"] = rc is not None
        results["structural"] = None if rc is None else {"a": rc.a, "B": rc.B, "c": rc.c}
    if mode in {"flow", "both"}:
        verdict = detect_flow(
            sys,
            tau,
            windows or [(tau, tau + DEFAULT_WINDOW)],
            sample_count,
            cfg,
            tol,
            seed=seed,
            runner=runner,
        )
        verdicts["flow"] = verdict.consistent
        results["flow"] = {
            "verdict": verdict.verdict,
            "maxNormalized": verdict.max_normalized,
            "maxParallelDeviation": verdict.max_parallel_deviation,
            "samples": [
                {
                    "xi": s.xi,
                    "h": s.h,
                    "maxNormalized": s.max_normalized,
                    "parallelDeviation": s.parallel_deviation,
                    "windows": s.windows,
                    "clipped": s.clipped,
                }
                for s in verdict.samples
            ],
        }
    if len(verdicts) == 2:
        verdicts["agree"] = verdicts["structural"] == verdicts["flow"]
        if not verdicts["agree"]:
            logger.warning("structural and flow detection disagree: %s", verdicts)
    return CommandResult(command="detect-riccati", results=results, verdicts=verdicts, tolerances={"detect": tol})


def frac_linear(
    rc: RiccatiCoeffs, tau: float, xi: Sequence[float], t: float, cfg: IntegratorConfig, tol: float = FRAC_TOLERANCE
) -> CommandResult:
    start = _vector(xi, rc.n, "xi")
    solution = frac_solution(rc, tau, start, t, cfg)
    existence = solution.existence
    direct = integrate_flow(riccati_to_system(rc), tau, start, t, cfg)

    rows: list[Row] = []
    worst = 0.0
    for k, sample in enumerate(direct):
        scale = float(np.max(np.abs(sample.y)))
        deviation = float(np.max(np.abs(solution.phi[k] - sample.y)))
        worst = max(worst, deviation / (1.0 + scale))
        rows.append((sample.t, deviation, scale))
    roundtrip = roundtrip_theorem61(rc, tau, [start], [t], cfg)
    final = solution.maps[-1]
    return CommandResult(
        command="frac-linear",
        results={
            "t": solution.t[-1],
            "phi": solution.phi[-1],
            "fracLin": {"A": final.A, "beta": final.beta, "gamma": final.gamma, "delta": final.delta},
            "rho": solution.lift.rho[-1],
            "existence": {"interval": existence.interval, "pole": existence.pole, "bracket": existence.bracket},
            "maxDeviation": worst,
            "roundtrip": roundtrip,
        },
        verdicts={"agreesWithDirect": worst <= tol},
        tolerances={"fracLinear": tol},
        rows=rows,
    )
