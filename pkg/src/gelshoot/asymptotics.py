"""Borderline homogeneity: the exact critical case and its linearization.

At the lowest gelling homogeneity the profile equation in Phi form reads

    b x Phi'(x) = Phi(x)^2 - Phi(x/2)^2,   Phi(0) = 1,

with exact decaying solutions at b = ln 2 built from a fractional-power
series 1 + sum a_n x^(n alpha), and a nonconstant analytic branch at b = 1
whose limit value is (1 - ln 2)/ln 2.  Slightly above the borderline the
linearized growth function Psi obeys Psi' = 2 Psi - 2 Psi((1-eps) y) + 1;
its large-argument behavior is governed by saddle-point quantities
(t*, W, D, U) and yields the exponentially small critical coupling and the
far-field tail exponents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from . import delaycore as dc
from .errors import DomainError
from .profiles import LN2

B_CRITICAL = LN2
GAMMA1_B1_LIMIT = (1.0 - LN2) / LN2


# ---------------------------------------------------------------------------
# fractional-exponent profile series at the borderline homogeneity


def alpha_root(b: float) -> float:
    """Unique positive root of b*alpha / (2 (1 - 2^-alpha)) = 1.

    Exists for 0 < b < 2 ln 2 (the left side starts below 1 and increases);
    for b = 1 the root is exactly 1.
    """
    if not b > 0.0:
        raise DomainError("b must be positive")
    if b >= 2.0 * LN2:
        raise DomainError(
            f"no positive root for b >= 2 ln 2 = {2.0 * LN2:.6f}")

    def g(al: float) -> float:
        return b * al / (2.0 * (1.0 - 2.0 ** (-al))) - 1.0

    hi = 1.0
    while g(hi) < 0.0:
        hi *= 2.0
    return brentq(g, 1e-12, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


@dataclass(frozen=True)
class Gamma1Profile:
    """Profile Phi(x) = 1 + sum_{n>=1} a_n x^(n alpha) at the borderline.

    a1 < 0 is the free coefficient; the rest follow from the recursion

        (n b alpha / (1 - 2^(-n alpha)) - 2) a_n = sum_{m<n} a_m a_{n-m}.
    """

    b: float
    alpha: float
    a1: float
    coefficients: np.ndarray       # a_0 = 1, a_1, ..., a_N
    truncation: int

    def eval(self, x):
        u = np.power(np.asarray(x, dtype=float), self.alpha)
        acc = np.zeros_like(u)
        for c in self.coefficients[::-1]:
            acc = acc * u + c
        return float(acc) if np.isscalar(x) else acc

    def eval_deriv(self, x):
        x_arr = np.asarray(x, dtype=float)
        u = np.power(x_arr, self.alpha)
        n = np.arange(1, len(self.coefficients))
        acc = np.zeros_like(u)
        for k in n[::-1]:
            acc = acc * u + k * self.coefficients[k]
        out = acc * self.alpha * u / x_arr
        return float(out) if np.isscalar(x) else out

    def switchover(self, tol: float = 1e-14) -> float:
        """Largest x where the last retained series term stays below tol."""
        aN = abs(self.coefficients[-1])
        if aN == 0.0:
            return 1.0
        return min((tol / aN) ** (1.0 / (self.truncation * self.alpha)), 2.0)


def gamma1_series(b: float, a1: float, N: int) -> Gamma1Profile:
    """Coefficients of the fractional-power profile for given a1 <= 0.

    a1 < 0 gives the decreasing branch; a1 = 0 collapses the series to the
    constant profile.
    """
    if a1 > 0.0:
        raise DomainError("a1 must be nonpositive; the profile decreases")
    if N < 2:
        raise DomainError("need N >= 2")
    al = alpha_root(b)
    a = np.zeros(N + 1)
    a[0] = 1.0
    a[1] = a1
    for n in range(2, N + 1):
        denom = n * b * al / (1.0 - 2.0 ** (-n * al)) - 2.0
        a[n] = float(np.dot(a[1:n], a[n - 1:0:-1])) / denom
    return Gamma1Profile(b=b, alpha=al, a1=a1, coefficients=a, truncation=N)


def gamma1_trajectory(profile: Gamma1Profile, x_max: float,
                      tol: float = 1e-10) -> dc.DenseTrajectory:
    """Continue the series profile by integrating in z = ln x.

    The log variable turns the halved argument into a constant shift, so
    steps grow with x and large spans stay cheap.
    """
    x0 = profile.switchover()
    z0 = math.log(x0)
    hist = dc.FunctionHistory(lambda z: profile.eval(math.exp(z)),
                              z0 - 2.0 * LN2, z0)
    rhs = dc.gamma1_log_equation(profile.b)
    z_max = math.log(x_max)
    return dc.integrate(rhs, hist, (z0, z_max), tol=tol)


def gamma1_b1_limit(a1: float, x_max: float = 1e5,
                    tol: float = 1e-10) -> dict:
    """Long-range limit of the analytic nonconstant profile at b = 1.

    The limit is (1 - ln2)/ln2 independently of a1 < 0; the approach is a
    power law x^(-p) with p ~ 1.31, reported from a tail fit.
    """
    prof = gamma1_series(1.0, a1, 40)
    if abs(prof.alpha - 1.0) > 1e-12:
        raise DomainError("expected integer-exponent branch at b = 1")
    traj = gamma1_trajectory(prof, x_max, tol=tol)
    ts, us, _ = traj.nodes()
    limit = float(us[-1])
    # power-law tail fit of |Phi - limit| on the last two decades
    dev = np.abs(us - GAMMA1_B1_LIMIT)
    mask = (ts > ts[-1] - 2.0 * math.log(10.0)) & (dev > 1e-14)
    fit_p = None
    if mask.sum() > 10:
        fit_p = float(-np.polyfit(ts[mask], np.log(dev[mask]), 1)[0])
    return {"limit": limit, "a1": a1, "x_max": x_max,
            "tail_exponent_fit": fit_p, "trajectory": traj}


# ---------------------------------------------------------------------------
# linearized growth function Psi and its saddle-point asymptotics


def _psi_log_terms(eps: float, y: float, N: int | None) -> np.ndarray:
    """Logs of the positive series terms of Psi(y), lowest order first."""
    if not 0.0 < eps < 1.0:
        raise DomainError("eps must lie in (0,1)")
    if y < 0.0:
        raise DomainError("Psi is evaluated for y >= 0")
    logs = [math.log(y)] if y > 0.0 else [-math.inf]
    if y == 0.0:
        return np.array(logs)
    log_prod = 0.0
    log_fact = 0.0
    ly = math.log(y)
    n = 1
    cap = N if N is not None else 100000
    while n <= cap:
        log_prod += math.log1p(-(1.0 - eps) ** n)
        log_fact += math.log(n + 1.0)
        logs.append(n * LN2 + log_prod - log_fact + (n + 1) * ly)
        if N is None and n > 8:
            m = max(logs)
            if logs[-1] < m - 36.0 and logs[-1] < logs[-2]:
                break
        n += 1
    return np.asarray(logs)


def psi_log_eval(eps: float, y: float, N: int | None = None) -> float:
    """log Psi(y), summed stably in log space (Psi's terms are positive)."""
    logs = _psi_log_terms(eps, y, N)
    m = float(np.max(logs))
    if m == -math.inf:
        return -math.inf
    return m + math.log(float(np.sum(np.exp(logs - m))))


def psi_series_eval(eps: float, y: float, N: int | None = None) -> float:
    """Psi(y) = y + sum 2^n prod_k (1-(1-eps)^k) / (n+1)! y^(n+1).

    Term count adapts until the tail is negligible unless N is given.
    Values beyond the double range overflow; use psi_log_eval there.
    """
    lv = psi_log_eval(eps, y, N)
    if lv > 700.0:
        raise OverflowError(
            f"Psi overflows doubles (log Psi = {lv:.1f}); use psi_log_eval")
    return math.exp(lv)


def psi_derivative(eps: float, y: float, N: int | None = None) -> float:
    """Term-wise derivative of the Psi series."""
    if y == 0.0:
        return 1.0
    logs = _psi_log_terms(eps, y, N)
    n = np.arange(len(logs))
    ly = math.log(y)
    dlogs = logs - ly + np.log(n + 1.0)
    m = float(np.max(dlogs))
    return math.exp(m) * float(np.sum(np.exp(dlogs - m)))


def psi_residual(eps: float, y: float) -> float:
    """Defect of Psi in Psi'(y) - 2 Psi(y) + 2 Psi((1-eps) y) - 1, relative."""
    dp = psi_derivative(eps, y)
    p1 = psi_series_eval(eps, y)
    p2 = psi_series_eval(eps, (1.0 - eps) * y)
    scale = abs(dp) + 2.0 * abs(p1) + 2.0 * abs(p2) + 1.0
    return (dp - 2.0 * p1 + 2.0 * p2 - 1.0) / scale


@dataclass(frozen=True)
class LaplaceQuantities:
    """Saddle-point data of the Psi asymptotics at scale parameter eta."""

    eta: float
    t_star: float
    W: float
    D: float
    U: float


def t_star(eta: float) -> float:
    """Unique positive root of t / (1 - e^-t) = 2 eta, for eta > 1/2."""
    if not eta > 0.5:
        raise DomainError("eta must exceed 1/2")
    lo, hi = 1e-12, 2.0 * eta
    # t/(1-e^-t) increases from 1 at t=0+ to infinity
    return brentq(lambda t: t / (-math.expm1(-t)) - 2.0 * eta, lo, hi,
                  xtol=1e-15, rtol=4 * np.finfo(float).eps)


def laplace_quantities(eta: float) -> LaplaceQuantities:
    """Saddle point t*, exponent integral W, curvature D, prefactor U.

    W integrates ln(2 eta (1-e^-t)/t) from 0 to t*; the integrand starts at
    ln(2 eta) and vanishes at t*.
    """
    ts = t_star(eta)

    def integrand(t: float) -> float:
        if t < 1e-12:
            return math.log(2.0 * eta) - 0.5 * t
        return math.log(2.0 * eta * (-math.expm1(-t)) / t)

    W, _ = quad(integrand, 0.0, ts, epsabs=1e-12, epsrel=1e-12, limit=200)
    emt = math.exp(-ts)
    D = -(1.0 / (2.0 * ts)) * (ts * emt / (1.0 - emt) - 1.0)
    U = eta * math.sqrt(math.pi) * math.sqrt(1.0 - emt) \
        / (math.sqrt(D) * ts ** 1.5)
    return LaplaceQuantities(eta=eta, t_star=ts, W=W, D=D, U=U)


def w_prime(eta: float) -> float:
    """d W / d eta = t*(eta) / eta (the boundary term vanishes at t*)."""
    return t_star(eta) / eta


def psi_asymptotics_check(eta: float, eps_list) -> list[dict]:
    """Defect of log Psi(eta/eps) against the saddle-point prediction.

    Returns rows {eps, log_psi, log_pred, r}; the prediction is
    log U - (1/2) log eps + W/eps and r is the difference.
    """
    lq = laplace_quantities(eta)
    rows = []
    for eps in eps_list:
        lp = psi_log_eval(eps, eta / eps)
        pred = math.log(lq.U) - 0.5 * math.log(eps) + lq.W / eps
        rows.append({"eps": float(eps), "log_psi": lp, "log_pred": pred,
                     "r": lp - pred})
    return rows


def critical_delta(eps: float, eta_bar: float) -> dict:
    """Exponentially small critical coupling and the matching descriptor.

    delta = sqrt(eps) e^(-W(eta_bar)/eps) / U(eta_bar); the transition
    region matches onto 1 - e^(slope (y - y_bar)) with slope = W'(eta_bar).
    """
    lq = laplace_quantities(eta_bar)
    log_delta = 0.5 * math.log(eps) - lq.W / eps - math.log(lq.U)
    return {
        "delta": math.exp(log_delta) if log_delta > -700.0 else 0.0,
        "log_delta": log_delta,
        "matching_slope": w_prime(eta_bar),
        "y_bar": eta_bar / eps,
        "matching_form": "1 - exp(slope * (y - y_bar))",
    }


# ---------------------------------------------------------------------------
# far-field tail exponents and matching


@dataclass(frozen=True)
class TailExponents:
    eps: float
    eta_bar: float
    beta: float
    alpha: float
    K1_over_c1: float
    sigma_rate: float
    K0_over_c0: float


def tail_exponents(eps: float, eta_bar: float) -> TailExponents:
    """Closed-form tail data: H ~ K1 y^alpha e^(-c1 y^beta) far out and
    K0 e^(sigma (y-y_bar)) e^(-c0 e^(sigma (y-y_bar))) in the transition."""
    if not 0.0 < eps < 0.5:
        raise DomainError("eps must lie in (0, 1/2)")
    beta = -LN2 / math.log1p(-eps)
    return TailExponents(
        eps=eps,
        eta_bar=eta_bar,
        beta=beta,
        alpha=beta - 1.0,
        K1_over_c1=4.0 * beta * (1.0 - eps) ** 2,
        sigma_rate=LN2 / eta_bar,
        K0_over_c0=4.0 * LN2 / eta_bar,
    )


def matching_closure(eps: float, eta_bar: float, c0_amp: float = 1.0) -> dict:
    """Propagate the transition amplitudes to the far field and back.

    Given c0 and K0 = (4 ln2/eta_bar) c0, the scale bridges
    c1 = c0 (eps/eta_bar)^beta and K1 = K0 (eps/eta_bar)^alpha force
    K1 = 4 c1 ln2 / eps exactly when alpha - beta = -1 is used exactly;
    4 c1 beta (1-eps)^2 is the same quantity to leading order in eps.
    """
    te = tail_exponents(eps, eta_bar)
    K0 = te.K0_over_c0 * c0_amp
    # work in logs: the scale factors overflow doubles for small eps
    log_scale = math.log(eps / eta_bar)
    log_c1 = math.log(c0_amp) + te.beta * log_scale
    log_K1 = math.log(K0) + te.alpha * log_scale
    log_K1_identity = math.log(4.0 * LN2 / eps) + log_c1
    log_K1_leading = math.log(4.0 * te.beta * (1.0 - eps) ** 2) + log_c1
    return {
        "log_K1_matched": log_K1,
        "log_K1_identity": log_K1_identity,
        "log_K1_leading_order": log_K1_leading,
        "identity_defect": log_K1 - log_K1_identity,
        "leading_order_defect": log_K1 - log_K1_leading,
    }
