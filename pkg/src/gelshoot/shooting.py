"""Long-time classification of profile solutions and the critical bracket.

For b > b0 the profile H starts from the analytic local series at the
origin and is continued by the delay integrator.  Its long-time behavior
falls into one of four classes:

  SignChange           H crosses to negative values (b too close to b0),
  ConvergesToConstant  the log-variable profile settles on the constant,
  Oscillating          sustained oscillations / stair-like H (b below the
                       stability boundary),
  Undetermined         none of the above resolved by y_max.

Bisecting SignChange against the rest brackets the critical parameter
between the sign-changing and oscillating regimes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import delaycore as dc
from .errors import (BlowUpError, BracketFailureError, DomainError,
                     NoPlateausError)
from .profiles import (ModelParams, make_params, local_series,
                       pantograph_series, series_switchover)
from .stability import b_star


@dataclass(frozen=True)
class ClassifyTols:
    """Decision thresholds for the classifier.

    tol_neg:      depth below zero that counts as a sign change
    tol_conv:     allowed deviation of the log-profile from the constant at
                  the end of the run
    conv_window:  trailing window (in z) that must stay within tol_conv
    min_extrema:  interior extrema required to call the run oscillating
    extrema_amp:  minimum swing between successive extrema that counts
    """

    tol_neg: float = 1e-9
    tol_conv: float = 1e-3
    conv_window: float = 0.25
    min_extrema: int = 3
    extrema_amp: float = 1e-4


@dataclass(frozen=True)
class Classification:
    """Outcome of a classification run plus its evidence."""

    kind: str                       # SignChange | ConvergesToConstant |
    #                                 Oscillating | Undetermined
    trajectory: dc.DenseTrajectory
    y_cross: Optional[float] = None
    tail_residual: Optional[float] = None
    num_extrema: Optional[int] = None
    min_level: Optional[float] = None
    plateau_ratios: tuple = ()
    y_max_reached: Optional[float] = None

    def evidence(self) -> dict:
        out = {"kind": self.kind}
        for k in ("y_cross", "tail_residual", "num_extrema", "min_level",
                  "y_max_reached"):
            v = getattr(self, k)
            if v is not None:
                out[k] = v
        if self.plateau_ratios:
            out["plateau_ratios"] = list(self.plateau_ratios)
        return out


def h_profile(params: ModelParams, y_max: float, tol: float = 1e-9,
              n_series: int = 40, stop_on_sign_change: bool = True,
              tol_neg: float = 1e-9) -> dc.DenseTrajectory:
    """Series-started trajectory of the H equation on [0, y_max]."""
    series = local_series(params, n_series)
    y0 = series_switchover(series)
    y0 = min(y0, 0.25 * y_max)
    hist = dc.SeriesHistory(series, y0)
    rhs = dc.h_equation(params)
    stop = (lambda y, u: u < -tol_neg) if stop_on_sign_change else None
    try:
        return dc.integrate(rhs, hist, (y0, y_max), tol=tol,
                            stop_condition=stop)
    except BlowUpError as err:
        if err.trajectory is not None and err.trajectory.us[-1] < -tol_neg:
            err.trajectory.event_t = err.trajectory.ts[-1]
            return err.trajectory
        raise


def _refine_crossing(traj: dc.DenseTrajectory, level: float) -> float:
    """Abscissa where the trajectory first reaches the given level."""
    ts, us, _ = traj.nodes()
    idx = np.nonzero(us < level)[0]
    if len(idx) == 0:
        return float(ts[-1])
    i = int(idx[0])
    if i == 0:
        return float(ts[0])
    lo, hi = float(ts[i - 1]), float(ts[i])
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if traj.eval(mid) < level:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _phi_extrema(ts, us, dus, amp_tol: float):
    """Interior extrema of phi(z) = y H(y) with swings above amp_tol.

    The slope d phi/dz = y (H + y H') is analytic in the node data, so
    extrema are sign changes of that expression.
    """
    phi = ts * us
    slope = ts * (us + ts * dus)
    sign = np.sign(slope)
    nz = sign != 0.0
    idx = np.nonzero(nz[1:] & nz[:-1] & (sign[1:] * sign[:-1] < 0.0))[0] + 1
    if len(idx) == 0:
        return 0, phi
    vals = phi[idx]
    kept = []
    last = phi[0]
    for v in vals:
        if abs(v - last) > amp_tol:
            kept.append(v)
            last = v
    return len(kept), phi


def classify(params: ModelParams, y_max: float = 500.0,
             tols: ClassifyTols = ClassifyTols(),
             tol: float = 1e-9) -> Classification:
    """Classify the long-time behavior of the profile for (gamma, b).

    Requires b > b0; integration stops early at a decisive sign change.
    """
    if params.b <= params.b0:
        raise DomainError(
            f"classification needs b > b0 = {params.b0:.6g}, got {params.b}")
    traj = h_profile(params, y_max, tol=tol, tol_neg=tols.tol_neg)
    ts, us, dus = traj.nodes()

    if traj.event_t is not None:
        y_cross = _refine_crossing(traj, -tols.tol_neg)
        return Classification(kind="SignChange", trajectory=traj,
                              y_cross=y_cross)

    n_ext, phi = _phi_extrema(ts, us, dus, tols.extrema_amp)
    min_level = float(np.min(phi))
    dev = np.abs(phi - params.phi_inf)
    z = np.log(ts)
    window = z >= z[-1] - tols.conv_window
    tail_residual = float(np.max(dev[window]))

    if n_ext >= tols.min_extrema and min_level > 0.0:
        ratios = ()
        try:
            _, ratios_list = _plateau_levels(traj)
            ratios = tuple(ratios_list)
        except NoPlateausError:
            pass
        return Classification(kind="Oscillating", trajectory=traj,
                              num_extrema=n_ext, min_level=min_level,
                              plateau_ratios=ratios,
                              tail_residual=tail_residual)

    # quiet trailing quarter guards against calling an oscillation trough
    # converged
    quarter = z >= z[-1] - 0.25 * (z[-1] - z[0])
    n_tail_ext, _ = _phi_extrema(ts[quarter], us[quarter], dus[quarter],
                                 tols.extrema_amp)
    if tail_residual < tols.tol_conv and n_tail_ext == 0:
        return Classification(kind="ConvergesToConstant", trajectory=traj,
                              tail_residual=tail_residual)

    return Classification(kind="Undetermined", trajectory=traj,
                          y_max_reached=float(ts[-1]),
                          tail_residual=tail_residual,
                          num_extrema=n_ext, min_level=min_level)


def scan_b(gamma: float, b_grid, y_max: float = 500.0,
           tols: ClassifyTols = ClassifyTols(), tol: float = 1e-9,
           jobs: int = 1) -> list[dict]:
    """Classify each b on a grid; per-point failures are recorded rows."""

    def one(b: float) -> dict:
        row = {"gamma": gamma, "b": float(b)}
        try:
            c = classify(make_params(gamma, b), y_max=y_max, tols=tols,
                         tol=tol)
            row["class"] = c.kind
            row["y_event"] = c.y_cross if c.y_cross is not None else ""
            row["extra"] = c.evidence()
        except Exception as err:             # per-point errors do not stop a scan
            row["class"] = "Error"
            row["y_event"] = ""
            row["extra"] = {"error": f"{type(err).__name__}: {err}"}
        return row

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(one, b_grid))
    return [one(b) for b in b_grid]


@dataclass(frozen=True)
class CriticalBracket:
    b_lo: float        # classified SignChange
    b_hi: float        # classified non-SignChange
    width: float
    gamma: float
    class_hi: str

    def __contains__(self, b: float) -> bool:
        return self.b_lo <= b <= self.b_hi


def bracket_bbar(gamma: float, tol_b: float = 1e-3, y_max: float = 500.0,
                 tols: ClassifyTols = ClassifyTols(),
                 tol: float = 1e-9) -> CriticalBracket:
    """Bisect the SignChange boundary in b, starting from (b0, b_star).

    The result is a numerical bracket for the critical parameter, not a
    proof; near the boundary the non-sign-changing side may legitimately
    classify as Undetermined.
    """
    if not tol_b > 0.0:
        raise DomainError("tol_b must be positive")
    b0 = 2.0 / (gamma - 1.0)
    lo = b0 * (1.0 + 1e-4)
    hi = b_star(gamma)

    def kind(b: float) -> str:
        return classify(make_params(gamma, b), y_max=y_max, tols=tols,
                        tol=tol).kind

    k_lo, k_hi = kind(lo), kind(hi)
    if (k_lo == "SignChange") == (k_hi == "SignChange"):
        raise BracketFailureError(lo, hi, k_lo, k_hi)
    while hi - lo > tol_b:
        mid = 0.5 * (lo + hi)
        k_mid = kind(mid)
        if k_mid == "SignChange":
            lo = mid
        else:
            hi = mid
            k_hi = k_mid
    return CriticalBracket(b_lo=lo, b_hi=hi, width=hi - lo, gamma=gamma,
                           class_hi=k_hi)


# ---------------------------------------------------------------------------
# limit profile (infinite homogeneity) and its stair structure


@dataclass(frozen=True)
class LimitRun:
    trajectory: dc.DenseTrajectory
    eps: float
    crossed_zero_at: Optional[float]


def limit_profile(eps: float, y_max: float = 2e5, tol: float = 1e-9,
                  eta: float = 0.0, tol_neg: float = 1e-9) -> LimitRun:
    """Series-started run of h' = -h(y(1+eps)/2)^2 + eta h(y)^2, h(0)=1."""
    p = 0.5 * (1.0 + eps)
    series = pantograph_series(p, eta, 40)
    y0 = series_switchover(series)
    rhs = dc.rescaled_h_equation(eps, eta)
    traj = dc.integrate(rhs, dc.SeriesHistory(series, y0), (y0, y_max),
                        tol=tol, stop_condition=lambda y, u: u < -tol_neg)
    crossed = None
    if traj.event_t is not None:
        crossed = _refine_crossing(traj, -tol_neg)
    return LimitRun(trajectory=traj, eps=eps, crossed_zero_at=crossed)


def _plateau_levels(traj: dc.DenseTrajectory, tread_slope: float = 0.6,
                    riser_slope: float = 1.0, level_cap: float = 0.5,
                    pts_per_decade: int = 30):
    """Plateau levels of a stair-like positive profile.

    Treads of the stair are interior local minima of the logarithmic slope
    |d ln h / d ln y| (flat in h over a wide y range), separated by risers
    where the slope exceeds riser_slope.  A tread counts when its slope
    minimum is below tread_slope and its level sits below level_cap times
    the starting value, which excludes the flat start at the origin.
    """
    ts, us, _ = traj.nodes()
    pos = us > 0.0
    last = int(np.argmin(pos)) - 1 if not pos.all() else len(ts) - 1
    if last < 8:
        raise NoPlateausError("profile too short for plateau detection")
    y_lo = max(2.0 * ts[0], 1e-3)
    y_hi = ts[last] * 0.999
    if y_hi <= y_lo * 1.5:
        raise NoPlateausError("profile span too short for plateau detection")
    n = max(16, int(pts_per_decade * math.log10(y_hi / y_lo)))
    y = np.geomspace(y_lo, y_hi, n)
    h = traj.eval_many(y)
    if np.any(h <= 0.0):
        keep = np.nonzero(h > 0.0)[0]
        y, h = y[: keep[-1] + 1], h[: keep[-1] + 1]
    dh = np.array([traj.deriv(float(v)) for v in y])
    s = np.abs(y * dh / h)

    u_start = float(us[0])
    levels, spans = [], []
    i = 1
    while i < len(y) - 1:
        if s[i] < tread_slope and s[i] <= s[i - 1] and s[i] <= s[i + 1]:
            j0 = i
            while j0 > 0 and s[j0 - 1] < riser_slope:
                j0 -= 1
            j1 = i
            while j1 < len(y) - 1 and s[j1 + 1] < riser_slope:
                j1 += 1
            k = i + int(np.argmin(s[i:j1 + 1]))
            level = float(h[k])
            if level < level_cap * u_start and j0 > 0:
                levels.append(level)
                spans.append((float(y[j0]), float(y[j1])))
            i = j1 + 1
        else:
            i += 1
    if len(levels) < 2:
        raise NoPlateausError(
            f"found {len(levels)} plateau(s); need at least 2")
    ratios = [levels[k + 1] / levels[k] for k in range(len(levels) - 1)]
    return list(zip(levels, spans)), ratios


def plateau_diagnostics(traj: dc.DenseTrajectory, eps: float,
                        slope_tol: float = 0.6) -> dict:
    """Successive plateau levels and ratios of a stair-like limit profile.

    For small eps > 0 the ratios approach c0 * eps with an O(eps^2)
    correction, c0 being the first moment of the Green kernel Q.
    """
    levels, ratios = _plateau_levels(traj, tread_slope=slope_tol)
    return {
        "eps": eps,
        "levels": [lv for lv, _ in levels],
        "spans": [sp for _, sp in levels],
        "ratios": ratios,
    }
