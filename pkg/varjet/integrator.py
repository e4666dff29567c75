"""Fixed-step classical Runge-Kutta driver shared by every flow in varjet."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass

import numpy as np

from varjet.errors import BlowUpError, ConfigError, NonFiniteError

logger = logging.getLogger(__name__)

Rhs = Callable[[float, np.ndarray], np.ndarray]
Guard = Callable[[np.ndarray], float]

BISECTION_ROUNDS = 30


@dataclass(frozen=True)
class Sample:
    t: float
    y: np.ndarray


def rk4_step(fn: Rhs, t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = fn(t, y)
    k2 = fn(t + h / 2, y + h * k1 / 2)
    k3 = fn(t + h / 2, y + h * k2 / 2)
    k4 = fn(t + h, y + h * k3)
    return y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6


def _segments(t0: float, t_end: float, stops: Iterable[float]) -> list[float]:
    direction = 1.0 if t_end >= t0 else -1.0
    inner = {s for s in stops if direction * (s - t0) > 0 and direction * (t_end - s) > 0}
    return sorted(inner, key=lambda s: direction * s) + [t_end]


def _escaped(y: np.ndarray, guard: Guard | None, max_norm: float) -> bool:
    if not np.isfinite(y).all():
        return True
    return guard is not None and guard(y) > max_norm


def _escape_time(fn: Rhs, t: float, y: np.ndarray, h: float, guard: Guard | None, max_norm: float) -> float:
    """Refine the failing step by bisection; returns an approximate escape time."""
    for _ in range(BISECTION_ROUNDS):
        h /= 2
        try:
            with np.errstate(all="ignore"):
                trial = rk4_step(fn, t, y, h)
        except (ArithmeticError, ValueError, np.linalg.LinAlgError):
            continue
        if not _escaped(trial, guard, max_norm):
            t, y = t + h, trial
    return t + h


def propagate(
    fn: Rhs,
    t0: float,
    y0: np.ndarray,
    t_end: float,
    step: float,
    *,
    guard: Guard | None = None,
    max_norm: float = math.inf,
    stops: Iterable[float] = (),
) -> list[Sample]:
    """Integrate ``y' = fn(t, y)`` from t0 to t_end, forward or backward.

    Each segment between consecutive stop times uses ceil(length / step)
    equal steps, so every stop and t_end is hit exactly. Returns every
    accepted sample, endpoints included. ``guard(y) > max_norm`` or a
    non-finite state raises BlowUpError carrying the accepted samples.
    """
    if not step > 0:
        raise ConfigError(f"step must be positive, got {step}")
    y = np.asarray(y0, dtype=float).copy()
    t = float(t0)
    samples = [Sample(t, y)]
    for target in _segments(t, float(t_end), stops):
        if target == t:
            continue
        count = max(1, math.ceil(abs(target - t) / step - 1e-9))
        start = t
        h = (target - start) / count
        for k in range(1, count + 1):
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    trial = rk4_step(fn, t, y, h)
            except NonFiniteError:
                trial = np.full_like(y, np.nan)
            if _escaped(trial, guard, max_norm):
                t_escape = _escape_time(fn, t, y, h, guard, max_norm)
                logger.debug("escape near t=%s after %s samples", t_escape, len(samples))
                raise BlowUpError(t_escape, samples)
            t = target if k == count else start + k * h
            y = trial
            samples.append(Sample(t, y))
    return samples
