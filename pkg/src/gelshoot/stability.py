"""Stability of the constant profile: explicit boundary and winding counts.

Linearizing the log-variable profile equation around its constant solution
gives a scalar delay equation whose characteristic function is

    F(lam) = e^(-dt*lam) + lam - st,

after normalizing with st = (theta+1)/(2 theta) and dt = (2 theta/(theta-1)) d.
All roots have negative real part exactly when dt < d* = arccos(st)/sqrt(1-st^2),
equivalently b > b_star(gamma).  Root counts in the right half plane are
computed with the argument principle on a large half-disk; roots come in
conjugate pairs, and the reported winding is the pair count (the number of
loops the image curve makes around the origin).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import delaycore as dc
from .errors import DomainError, OriginOnCurveError
from .profiles import LN2, ModelParams, make_params


def b_star(gamma: float) -> float:
    """Critical shooting parameter below which the constant profile loses
    stability."""
    if not gamma > 1.0:
        raise DomainError(f"gamma must exceed 1, got {gamma}")
    st = 0.5 + 2.0 ** (-gamma)
    return (2.0 ** gamma * LN2 * math.sqrt(1.0 - st * st)
            / ((2.0 ** (gamma - 1.0) - 1.0) * math.acos(st)))


def p_ratio(rho: float) -> float:
    """The ratio b_star/b0 expressed through rho = 1 - 2^(-(gamma-1))."""
    if not 0.0 < rho < 1.0:
        raise DomainError(f"rho must lie in (0,1), got {rho}")
    return (-math.log1p(-rho) / rho) * math.sqrt(rho - rho * rho / 4.0) \
        / math.acos(1.0 - rho / 2.0)


@dataclass(frozen=True)
class CharProblem:
    """Normalized characteristic-equation data for given (gamma, b)."""

    theta: float
    sigma_tilde: float
    d_tilde: float
    d_star: float

    @staticmethod
    def from_params(params: ModelParams) -> "CharProblem":
        th = params.theta
        st = (th + 1.0) / (2.0 * th)
        return CharProblem(
            theta=th,
            sigma_tilde=st,
            d_tilde=2.0 * th / (th - 1.0) * params.d,
            d_star=math.acos(st) / math.sqrt(1.0 - st * st),
        )


@dataclass(frozen=True)
class WindingResult:
    """Pair count of unstable roots plus the sampled stability curve."""

    winding: int
    root_count: int
    curve: np.ndarray           # complex samples of the imaginary-axis image
    R: float
    min_distance: float


def _unwrapped_angle_sum(z: np.ndarray) -> float:
    """Total continuous argument increment along a sampled curve."""
    ang = np.angle(z)
    d = np.diff(ang)
    d = (d + math.pi) % (2.0 * math.pi) - math.pi
    return float(np.sum(d))


def winding_number(params: ModelParams, R: float | None = None,
                   n_samples: int = 20000) -> WindingResult:
    """Count unstable characteristic roots by the argument principle.

    The boundary of the right half-disk of radius R maps to the closed
    curve {F(it)} + {F(R e^(i theta))}; its total winding around the origin
    equals the number of roots with positive real part, which is even by
    conjugate symmetry.  The reported winding is the pair count: 0 exactly
    when b > b_star.
    """
    cp = CharProblem.from_params(params)
    st, dt = cp.sigma_tilde, cp.d_tilde
    if R is None:
        R = max(50.0, 20.0 / dt)
    # loops happen at bounded |t|: the imaginary part t - sin(dt t) is
    # monotone-in-t beyond |t| > 1 + 1/dt-ish; verify the curve stays far
    # from the origin for |t| > R/2
    if R / 2.0 - 1.0 - 1.0 / max(dt, 1e-12) < 2.0 * (1.0 + st):
        raise DomainError("R too small for the turn-counting region")

    t = np.linspace(-R, R, n_samples)
    z1 = (-st + np.cos(dt * t)) + 1j * (t - np.sin(dt * t))

    # refine where the curve comes near the origin
    dist = np.abs(z1)
    near = dist < 1.0
    if near.any():
        idx = np.nonzero(near)[0]
        lo = t[max(idx[0] - 1, 0)]
        hi = t[min(idx[-1] + 1, len(t) - 1)]
        tref = np.linspace(lo, hi, 8 * n_samples // 10)
        zref = (-st + np.cos(dt * tref)) + 1j * (tref - np.sin(dt * tref))
        t = np.concatenate([t[t < lo], tref, t[t > hi]])
        z1 = np.concatenate([z1[: np.sum(t < lo)], zref,
                             z1[len(z1) - np.sum(t > hi):]])

    theta_arc = np.linspace(-math.pi / 2.0, math.pi / 2.0, 4000)
    zarc = R * np.exp(1j * theta_arc)
    z2 = np.exp(-dt * zarc) + zarc - st

    closed = np.concatenate([z1[::-1], z2])   # down the axis, then the arc
    closed = np.append(closed, closed[0])
    min_distance = float(np.min(np.abs(closed)))
    if min_distance < 1e-8:
        raise OriginOnCurveError(
            f"curve passes within {min_distance:.2e} of the origin")

    total = _unwrapped_angle_sum(closed) / (2.0 * math.pi)
    count = int(round(total))
    if abs(total - count) > 0.05:
        raise DomainError(f"non-integer winding {total:.4f}; raise n_samples")
    if count < 0 or count % 2 != 0:
        raise DomainError(f"unexpected root count {count}")
    return WindingResult(winding=count // 2, root_count=count,
                         curve=z1, R=R, min_distance=min_distance)


def b_star_by_winding(gamma: float, tol_b: float = 1e-4) -> float:
    """Locate the winding transition by bisection in b.

    Independent numerical route to the closed-form boundary.
    """
    ref = b_star(gamma)
    lo, hi = 0.6 * ref, 1.6 * ref
    if winding_number(make_params(gamma, lo)).winding == 0 or \
            winding_number(make_params(gamma, hi)).winding != 0:
        raise DomainError("bisection endpoints do not straddle the boundary")
    while hi - lo > tol_b:
        mid = 0.5 * (lo + hi)
        try:
            w = winding_number(make_params(gamma, mid)).winding
        except OriginOnCurveError:
            return mid
        if w == 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# empirical stability of the constant profile


@dataclass(frozen=True)
class DecayReport:
    decayed: bool
    final_deviation: float
    sup_deviation: float
    rate_fit: float | None
    horizon: float
    escaped: bool = False


def stability_empirical(params: ModelParams, perturbation,
                        horizon: float = 200.0,
                        tol: float = 1e-9) -> DecayReport:
    """Integrate the log-variable equation from a perturbed constant history.

    The history on [-d, 0] is phi_inf + perturbation(z).  For b > b_star the
    deviation decays exponentially; the report carries the fitted rate.  On
    the unstable side the run stops early once the deviation escapes well
    past the constant (deep instability dives to a blow-up).  The
    perturbation must stay below 0.1 * phi_inf in magnitude.
    """
    pinf = params.phi_inf
    d = params.d
    zs = np.linspace(-d, 0.0, 64)
    sup0 = float(np.max(np.abs([perturbation(z) for z in zs])))
    if sup0 > 0.1 * pinf + 1e-15:
        raise DomainError("perturbation exceeds a tenth of the constant")

    escape = max(100.0 * sup0, 2.0 * pinf)
    hist = dc.FunctionHistory(lambda z: pinf + perturbation(z), -d, 0.0)
    rhs = dc.phi_equation(params)
    traj = dc.integrate(rhs, hist, (0.0, horizon), tol=tol,
                        stop_condition=lambda z, u: abs(u - pinf) > escape)
    ts, us, _ = traj.nodes()
    dev = np.abs(us - pinf)
    final = float(dev[-1])
    sup = float(np.max(dev))
    escaped = traj.event_t is not None

    rate = None
    tail = ts > 0.5 * ts[-1]
    good = tail & (dev > 1e-14)
    if not escaped and good.sum() > 10 and sup0 > 0.0:
        rate = float(-np.polyfit(ts[good], np.log(dev[good]), 1)[0])
    decayed = (not escaped) and final < 1e-6 * max(1.0, pinf)
    return DecayReport(decayed=decayed, final_deviation=final,
                       sup_deviation=sup, rate_fit=rate, horizon=horizon,
                       escaped=escaped)


def stability_scan(gamma: float, b_values, jobs: int = 1) -> list[dict]:
    """Winding and threshold data for a list of b values at fixed gamma."""

    def one(b: float) -> dict:
        p = make_params(gamma, float(b))
        cp = CharProblem.from_params(p)
        w = winding_number(p)
        return {
            "gamma": gamma,
            "b": float(b),
            "winding": w.winding,
            "d_tilde": cp.d_tilde,
            "d_star": cp.d_star,
        }

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(one, b_values))
    return [one(b) for b in b_values]


def curve_samples(params: ModelParams, R: float | None = None,
                  n_samples: int = 4000) -> np.ndarray:
    """Imaginary-axis image of the characteristic function, for plotting."""
    cp = CharProblem.from_params(params)
    if R is None:
        R = max(12.0, 6.0 / cp.d_tilde)
    t = np.linspace(-R, R, n_samples)
    return (-cp.sigma_tilde + np.cos(cp.d_tilde * t)) \
        + 1j * (t - np.sin(cp.d_tilde * t))
