"""Error metrics and rate estimation for simulated trajectories."""

from __future__ import annotations

import math

import numpy as np

from .graph import disagreement_basis
from .trajectory import Trajectory

MIN_FIT_SAMPLES = 20


def tracking_error(traj: Trajectory) -> np.ndarray:
    """``x_i(t) - u_avg(t)``; NaN where an agent is absent."""
    return traj.error()


def steady_state_error(series: np.ndarray, tail_fraction: float = 0.2) -> float:
    """Largest absolute value over the last ``tail_fraction`` of the rows."""
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    series = np.asarray(series, dtype=float)
    k = series.shape[0]
    start = min(int(np.floor(k * (1 - tail_fraction))), k - 1)
    return float(np.nanmax(np.abs(series[start:])))


def time_average_error(series: np.ndarray) -> float:
    """Mean absolute error over all rows and present agents."""
    return float(np.nanmean(np.abs(np.asarray(series, dtype=float))))


def error_norms(err: np.ndarray) -> np.ndarray:
    """Per-row Euclidean norm over present agents."""
    err = np.asarray(err, dtype=float)
    if err.ndim == 1:
        return np.abs(err)
    return np.sqrt(np.nansum(err**2, axis=1))


def auto_window(mag: np.ndarray, start: int = 0) -> tuple[int, int]:
    """From ``start`` up to the first sample at the round-off floor.

    The floor is ten machine epsilons times the largest magnitude in the series.
    """
    floor = 10 * np.finfo(float).eps * np.max(mag)
    below = np.nonzero(mag[start:] <= floor)[0]
    stop = start + int(below[0]) if below.size else len(mag)
    return start, stop


def fit_rate(series: np.ndarray, window: tuple[int, int] | None = None, dt: float | None = None) -> dict:
    """Least-squares fit of ``log |e_k|`` against ``k``.

    Matrix series are reduced to per-row norms first. Returns the per-step
    geometric ratio ``rate``; with ``dt`` the continuous exponent
    ``exponent = -slope/dt`` is reported too.
    """
    mag = error_norms(series)
    lo, hi = window if window is not None else auto_window(mag)
    seg = mag[lo:hi]
    if len(seg) < MIN_FIT_SAMPLES:
        raise ValueError(f"fit window has {len(seg)} samples, need at least {MIN_FIT_SAMPLES}")
    if np.any(seg <= 0) or not np.all(np.isfinite(seg)):
        raise ValueError("fit window contains zero or non-finite magnitudes")
    k = np.arange(lo, hi, dtype=float)
    y = np.log(seg)
    slope, icpt = np.polyfit(k, y, 1)
    resid = y - (slope * k + icpt)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    out = {"rate": float(np.exp(slope)), "r_squared": float(r2), "window": [int(lo), int(hi)]}
    if dt is not None:
        out["exponent"] = float(-slope / dt)
    return out


def iss_sym_bound(a: np.ndarray) -> tuple[float, float]:
    """``(kappa, lam) = (1, -lambda_max(Sym a))``; requires ``Sym(a)`` Hurwitz."""
    a = np.asarray(a, dtype=float)
    top = float(np.linalg.eigvalsh(0.5 * (a + a.T)).max())
    if top >= 0:
        raise ValueError(f"symmetric part is not Hurwitz (largest eigenvalue {top:.3g})")
    return 1.0, -top


def decompose_error(e: np.ndarray, basis: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Split ``e`` into its component along ``1/sqrt(n)`` and its disagreement coordinates ``R^T e``."""
    e = np.asarray(e, dtype=float)
    n = e.shape[-1]
    R = disagreement_basis(n) if basis is None else np.asarray(basis)
    if R.shape != (n, n - 1):
        raise ValueError(f"basis shape {R.shape} does not match n={n}")
    return float(e.sum() / np.sqrt(n)), R.T @ e


def compose_error(consensus: float, disagreement: np.ndarray) -> np.ndarray:
    """Inverse of :func:`decompose_error`."""
    d = np.asarray(disagreement, dtype=float)
    n = d.size + 1
    return consensus * np.ones(n) / np.sqrt(n) + disagreement_basis(n) @ d


def log_magnitudes(values) -> np.ndarray:
    """``log |v|`` for floats or exact rationals too small for a double."""
    out = []
    for v in values:
        try:
            num, den = abs(v.numerator), v.denominator
        except AttributeError:
            out.append(math.log(abs(float(v))) if v else -math.inf)
            continue
        out.append(math.log(num) - math.log(den) if num else -math.inf)
    return np.array(out)


def fit_log_rate(logmag: np.ndarray, window: tuple[int, int]) -> dict:
    """Rate fit on precomputed log-magnitudes (for exact-arithmetic runs)."""
    lo, hi = window
    y = np.asarray(logmag[lo:hi], dtype=float)
    if len(y) < MIN_FIT_SAMPLES or not np.all(np.isfinite(y)):
        raise ValueError("fit window too short or contains zeros")
    k = np.arange(lo, hi, dtype=float)
    slope, icpt = np.polyfit(k, y, 1)
    resid = y - (slope * k + icpt)
    ss_tot = np.sum((y - y.mean()) ** 2)
    return {"rate": float(np.exp(slope)),
            "r_squared": float(1 - np.sum(resid**2) / ss_tot) if ss_tot > 0 else 1.0,
            "window": [int(lo), int(hi)]}


def summarize(traj: Trajectory, tail_fraction: float = 0.2) -> dict:
    """Metrics block written next to every run."""
    err = traj.error()
    per_agent = []
    start = traj.tail(tail_fraction).start
    for i in range(traj.n):
        col = err[start:, i]
        col = col[~np.isnan(col)]
        per_agent.append(float(np.max(np.abs(col))) if col.size else None)
    out = {
        "tail_fraction": tail_fraction,
        "tail_sup_error": steady_state_error(err, tail_fraction),
        "tail_sup_error_per_agent": per_agent,
        "time_avg_error": time_average_error(err),
    }
    try:
        out["rate_fit"] = fit_rate(err)
    except ValueError:
        out["rate_fit"] = None
    return out
