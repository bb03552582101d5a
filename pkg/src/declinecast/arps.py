"""Hyperbolic decline model and Levenberg-Marquardt parameter fitting.

The rate model is q(t) = qi / (1 + b*di*t)^(1/b) with t in months since the
well's first reported month (t=0 gives qi exactly). Fitting minimizes the sum
of squared residuals against an observed monthly-rate window, with parameters
kept inside a box via projected steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Damping factor above which LM gives up on finding a downhill step.
LAMBDA_MAX = 1e12


class FitError(Exception):
    """Nonlinear fit failed on this data (bad residuals, degenerate window)."""


@dataclass(frozen=True)
class ArpsParams:
    """Hyperbolic decline parameters.

    qi: initial rate, Mscf/month. b: curvature exponent. di: initial
    decline rate, 1/month.
    """

    qi: float
    b: float
    di: float

    def __post_init__(self):
        if not (self.qi > 0 and self.di > 0 and 0 < self.b <= 2):
            raise ValueError(
                f"invalid decline parameters qi={self.qi} b={self.b} di={self.di}"
            )


@dataclass(frozen=True)
class LmConfig:
    """Levenberg-Marquardt settings: damping schedule, stop rule, parameter box."""

    max_iterations: int = 200
    lambda0: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 0.1
    tolerance: float = 1e-10  # relative SSE decrease considered converged
    qi_bounds: tuple[float, float] = (1e-3, 1e9)
    b_bounds: tuple[float, float] = (1e-3, 2.0)
    di_bounds: tuple[float, float] = (1e-6, 10.0)

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tolerance <= 0 or self.lambda0 <= 0:
            raise ValueError("tolerance and lambda0 must be positive")
        if self.lambda_up <= 1 or not 0 < self.lambda_down < 1:
            raise ValueError("lambda_up must exceed 1 and lambda_down lie in (0,1)")
        for lo, hi in (self.qi_bounds, self.b_bounds, self.di_bounds):
            if not 0 < lo < hi:
                raise ValueError("bounds must satisfy 0 < lo < hi")
        if self.b_bounds[1] > 2.0:
            raise ValueError("b upper bound cannot exceed 2")

    @property
    def lower(self):
        return np.array([self.qi_bounds[0], self.b_bounds[0], self.di_bounds[0]])

    @property
    def upper(self):
        return np.array([self.qi_bounds[1], self.b_bounds[1], self.di_bounds[1]])


def arps_rate(p: ArpsParams, t):
    """Monthly production rate at time t (scalar or array of months, t >= 0).

    Evaluated as qi * exp(-log1p(b*di*t)/b), which stays finite as b
    approaches its lower bound.
    """
    t = np.asarray(t, dtype=float)
    out = p.qi * np.exp(-np.log1p(p.b * p.di * t) / p.b)
    return float(out) if out.ndim == 0 else out


def arps_forecast(p: ArpsParams, t_from: int, t_to: int):
    """Rates at integer months t_from..t_to inclusive."""
    if t_from < 0 or t_from > t_to:
        raise ValueError(f"bad forecast range {t_from}..{t_to}")
    return arps_rate(p, np.arange(t_from, t_to + 1))


def _model_and_jacobian(theta, t):
    """Rate vector and its analytic Jacobian wrt (qi, b, di) at months t."""
    qi, b, di = theta
    u = 1.0 + b * di * t
    q = qi * np.exp(-np.log1p(b * di * t) / b)
    d_qi = q / qi
    d_b = q * (np.log1p(b * di * t) / b**2 - di * t / (b * u))
    d_di = -q * t / u
    return q, np.column_stack([d_qi, d_b, d_di])


def _sse(theta, t, observed):
    qi, b, di = theta
    q = qi * np.exp(-np.log1p(b * di * t) / b)
    r = q - observed
    return float(r @ r)


def lm_fit(observed, init: ArpsParams, cfg: LmConfig | None = None, *, trace=None):
    """Fit (qi, b, di) to an observed rate window at t = 0..n-1.

    Damped Gauss-Newton with Marquardt diagonal scaling; candidate steps are
    clamped to the configured box before evaluation, so iterates never leave
    it. Returns (ArpsParams, final SSE). `trace`, if a list, receives the SSE
    of the initial point and of every accepted step.

    Raises FitError for windows the fit cannot work with (all zero, or
    non-finite residuals at the initial point).
    """
    cfg = cfg or LmConfig()
    observed = np.asarray(observed, dtype=float)
    n = observed.size
    if n < 3:
        raise ValueError(f"need at least 3 observations to fit 3 parameters, got {n}")
    if not np.all(np.isfinite(observed)) or np.any(observed < 0):
        raise FitError("observations must be finite and non-negative")
    if not np.any(observed > 0):
        raise FitError("all-zero observation window")

    lo, hi = cfg.lower, cfg.upper
    t = np.arange(n, dtype=float)
    theta = np.clip([init.qi, init.b, init.di], lo, hi)

    sse = _sse(theta, t, observed)
    if not math.isfinite(sse):
        raise FitError("non-finite residuals at the initial parameters")
    if trace is not None:
        trace.append(sse)

    lam = cfg.lambda0
    for _ in range(cfg.max_iterations):
        q, jac = _model_and_jacobian(theta, t)
        residual = q - observed
        grad = jac.T @ residual
        jtj = jac.T @ jac
        # Marquardt scaling: damp each direction relative to its own curvature.
        diag = np.maximum(np.diag(jtj), 1e-12)

        accepted = False
        while lam <= LAMBDA_MAX:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                candidate = np.clip(theta + step, lo, hi)
                cand_sse = _sse(candidate, t, observed)
                if math.isfinite(cand_sse) and cand_sse <= sse:
                    improvement = sse - cand_sse
                    theta, sse = candidate, cand_sse
                    lam = max(lam * cfg.lambda_down, 1e-15)
                    accepted = True
                    if trace is not None:
                        trace.append(sse)
                    break
            lam *= cfg.lambda_up
        if not accepted:
            break  # damping overflow: no downhill step exists
        if improvement <= cfg.tolerance * max(sse, 1e-300):
            break

    return ArpsParams(qi=float(theta[0]), b=float(theta[1]), di=float(theta[2])), sse


def default_init(observed, cfg: LmConfig | None = None) -> ArpsParams:
    """Starting point when no county baseline exists: first value, b=1, di=0.1."""
    cfg = cfg or LmConfig()
    qi0 = float(np.asarray(observed, dtype=float)[0])
    return ArpsParams(
        qi=float(np.clip(qi0, *cfg.qi_bounds)),
        b=float(np.clip(1.0, *cfg.b_bounds)),
        di=float(np.clip(0.1, *cfg.di_bounds)),
    )


def county_baseline_fit(county, cfg: LmConfig | None = None) -> ArpsParams:
    """Fit the county's elementwise mean production series over its full length.

    This is the county-level benchmark curve; per-well forecasts refit from it
    via refit_from_window.
    """
    if len(county.wells) == 0:
        raise ValueError("cannot fit a baseline to an empty county")
    mean_series = np.mean([w.production for w in county.wells], axis=0)
    params, _ = lm_fit(mean_series, default_init(mean_series, cfg), cfg)
    return params


def refit_from_window(baseline: ArpsParams, window, cfg: LmConfig | None = None) -> ArpsParams:
    """Tune the county baseline to one well's first months of actual production."""
    params, _ = lm_fit(window, baseline, cfg)
    return params


def save_params(p: ArpsParams, path):
    """Write parameters as key=value lines with full decimal precision."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"qi={p.qi!r}\nb={p.b!r}\ndi={p.di!r}\n")


def load_params(path) -> ArpsParams:
    """Read parameters written by save_params."""
    fields = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            try:
                fields[key] = float(value)
            except ValueError:
                raise ValueError(f"bad parameter line in {path}: {line!r}") from None
    missing = {"qi", "b", "di"} - fields.keys()
    if missing:
        raise ValueError(f"parameter file {path} missing {sorted(missing)}")
    return ArpsParams(qi=fields["qi"], b=fields["b"], di=fields["di"])
