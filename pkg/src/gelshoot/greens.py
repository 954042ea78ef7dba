"""Fundamental solution of the linear delay equation phi' = phi - 2 phi(x/2).

The response G(x, xi) to a unit point source at xi vanishes for x < xi and
splits as

    G(x, xi) = e^x Q(xi) + Gtilde(x, xi),

where Q is an explicit alternating exponential series and Gtilde collects
the remaining inverse-Laplace contributions on a vertical contour
Re z = Ltilde in (1/2, 1).  Three evaluation routes are provided and cross
checked against each other:

  * g_by_ode        direct integration of the delay equation (reference),
  * e^x Q + quadrature of the contour terms (verification),
  * e^x Q + residue closed form of the contour terms (fast, used by the
    fixed-point solver).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from . import delaycore as dc
from .errors import DomainError, TruncationWarning

LN2 = math.log(2.0)

#: coefficients a_n = 2^(2n) / prod_{j=1..n} (2^j - 1); Q = sum (-1)^n a_n e^(-2^n xi)
_NQ = 20


@lru_cache(maxsize=None)
def q_coefficients(n_max: int = _NQ) -> np.ndarray:
    a = np.empty(n_max + 1)
    a[0] = 1.0
    prod = 1.0
    for n in range(1, n_max + 1):
        prod *= 2.0 ** n - 1.0
        a[n] = 4.0 ** n / prod
    return a


def q_eval(xi, N: int = _NQ):
    """Alternating series for Q(xi), truncated after N terms.

    Terms beyond n = 2 are strictly decreasing in magnitude, so the first
    omitted term bounds the truncation error (see q_tail_bound).
    Accepts scalars or arrays; xi must be >= 0.
    """
    if N < 1:
        raise DomainError("need at least one series term")
    xi_arr = np.asarray(xi, dtype=float)
    if np.any(xi_arr < 0.0):
        raise DomainError("Q is evaluated for xi >= 0")
    a = q_coefficients(max(N, 2))
    n = np.arange(min(N, len(a) - 1) + 1)
    signs = np.where(n % 2 == 0, 1.0, -1.0)
    terms = signs * a[n] * np.exp(-np.outer(xi_arr.ravel(), 2.0 ** n))
    out = terms.sum(axis=1).reshape(xi_arr.shape)
    return float(out) if np.isscalar(xi) or xi_arr.ndim == 0 else out


def q_tail_bound(xi: float, N: int = _NQ) -> float:
    """Magnitude of the first omitted term, valid as a bound for N >= 2."""
    a = q_coefficients(max(N + 1, 2))
    n = min(N + 1, len(a) - 1)
    return float(a[n] * math.exp(-(2.0 ** n) * xi))


def exq_eval(xi) -> np.ndarray:
    """e^xi Q(xi), summed without the overall exponential (stable for large xi)."""
    xi_arr = np.asarray(xi, dtype=float)
    a = q_coefficients()
    n = np.arange(len(a))
    signs = np.where(n % 2 == 0, 1.0, -1.0)
    expo = np.outer(xi_arr.ravel(), 1.0 - 2.0 ** n)   # <= 0
    out = (signs * a[n] * np.exp(expo)).sum(axis=1).reshape(xi_arr.shape)
    return float(out) if np.isscalar(xi) or xi_arr.ndim == 0 else out


def c0_moment() -> float:
    """First moment of Q: integral of eta Q(eta) over (0, inf), by series.

    Term-wise integration gives 1 + sum_{n>=1} (-1)^n / prod_{j<=n}(2^j - 1);
    the n = 0 and n = 1 terms cancel exactly.
    """
    total = 1.0
    prod = 1.0
    term = 1.0
    n = 1
    while abs(term) > 1e-18 and n < 40:
        prod *= 2.0 ** n - 1.0
        term = (-1.0) ** n / prod
        total += term
        n += 1
    return total


def c0_moment_quad() -> float:
    """The same moment by adaptive quadrature, the independent route."""
    val, _ = quad(lambda t: t * q_eval(t), 0.0, 60.0, limit=300,
                  epsabs=1e-13, epsrel=1e-13)
    return val


def eta_derivative_moment() -> float:
    """Integral of e^(-xi) Q(xi) over (0, inf), by term-wise series."""
    total = 0.5
    prod = 1.0
    for n in range(1, 40):
        prod *= 2.0 ** n - 1.0
        total += (-1.0) ** n * 4.0 ** n / ((1.0 + 2.0 ** n) * prod)
    return total


# ---------------------------------------------------------------------------
# route 1: direct integration of the delay equation


def g_by_ode(x: float, xi: float, tol: float = 1e-10) -> float:
    """G(x, xi) by integrating phi' = phi - 2 phi(x/2) from the unit jump.

    Requires x > xi > 0; for x < xi the solution is identically zero.
    """
    if not xi > 0.0:
        raise DomainError("source point xi must be positive")
    if x < xi:
        return 0.0
    if x == xi:
        return 1.0
    traj = dc.integrate(dc.linear_g_equation(), dc.PointSourceHistory(xi),
                        (xi, x), tol=tol, u0=1.0)
    return traj.eval(x)


def g_trajectory(x_end: float, xi: float, tol: float = 1e-10):
    """Dense trajectory of G(., xi) on [xi, x_end]."""
    if not x_end > xi > 0.0:
        raise DomainError("need x_end > xi > 0")
    return dc.integrate(dc.linear_g_equation(), dc.PointSourceHistory(xi),
                        (xi, x_end), tol=tol, u0=1.0)


# ---------------------------------------------------------------------------
# route 2: contour quadrature of the Gtilde terms


@dataclass(frozen=True)
class GreensEval:
    """Evaluation configuration for the decomposition routes.

    L_tilde is the vertical-contour abscissa, strictly inside (1/2, 1);
    T_max caps the truncated integration range in the imaginary direction;
    N_terms caps the term count of the contour series (term magnitudes fall
    like 2^(2n) / 2^(n(n+1)/2), so the cap is rarely reached).
    """

    N_q: int = _NQ
    L_tilde: float = 0.75
    T_max: float = 200.0
    nodes_per_panel: int = 8
    N_terms: int = 16
    tail_target: float = 1e-8

    def __post_init__(self):
        if not 0.5 < self.L_tilde < 1.0:
            raise DomainError("L_tilde must lie strictly inside (1/2, 1)")


def term_coefficient(n: int) -> float:
    """Signed prefactor (-1)^n 2^(2n) / 2^(n(n+1)/2) of the n-th term."""
    return (-1.0) ** n * 2.0 ** (2 * n) / 2.0 ** (n * (n + 1) / 2)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def _term_tail_estimate(n: int, a: float, L: float, T: float) -> float:
    """Bound on the omitted |t| > T part of the n-th contour integral."""
    amp = math.exp(a * L) / math.pi
    return amp * min(1.0 / (max(abs(a), 1e-30) * T ** (n + 1)),
                     1.0 / (n * T ** n))


def contour_term_quadrature(n: int, x: float, xi: float,
                            cfg: GreensEval = GreensEval()):
    """Numerical value of (1/2pi) int e^((x - 2^n xi)(L + it)) / prod dt.

    Integrates over t in [-T, T] with T chosen from the integrand decay
    (1/t^(n+1), oscillation e^(iat) with a = x - 2^n xi) but capped at
    cfg.T_max.  Returns (value, tail_estimate).
    """
    a = x - 2.0 ** n * xi
    L = cfg.L_tilde
    T = 10.0
    while T < cfg.T_max and _term_tail_estimate(n, a, L, T) >= cfg.tail_target:
        T *= 1.5
    T = min(T, cfg.T_max)
    tail = _term_tail_estimate(n, a, L, T)

    # Panel widths: the integrand's poles sit at distance >= L - 1/2 from
    # the real axis, so panels near t = 0 must stay below that scale; they
    # may grow linearly with t afterwards, capped by the oscillation
    # wavelength 2pi/|a|.
    width_cap = 1.5 / max(abs(a), 0.1)
    w0 = min(0.8 * (L - 0.5), width_cap)
    edges = [0.0]
    while edges[-1] < T:
        t_cur = edges[-1]
        w = min(max(w0, 0.15 * t_cur), width_cap)
        edges.append(min(t_cur + w, T))
    edges = np.asarray(edges)

    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    tm = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    wm = (half[:, None] * _GL_W[None, :]).ravel()
    poles = L - 2.0 ** (-np.arange(n + 1.0))  # L - 2^(-j), j = 0..n
    zden = np.ones_like(tm, dtype=complex)
    for p in poles:
        zden *= p + 1j * tm
    integrand = np.exp(a * (L + 1j * tm)) / zden
    # integrand(-t) = conj(integrand(t)): fold the negative half-line
    val = float(np.sum(wm * integrand.real))
    return val / math.pi, tail


def gtilde_quadrature(x: float, xi: float,
                      cfg: GreensEval = GreensEval()) -> float:
    """Gtilde(x, xi) as a truncated sum of contour-term quadratures.

    Emits TruncationWarning when the estimated omitted tail of any term
    exceeds cfg.tail_target.
    """
    if not x > xi > 0.0:
        raise DomainError("need x > xi > 0")
    total = 0.0
    for n in range(1, cfg.N_terms + 1):
        coef = term_coefficient(n)
        a = x - 2.0 ** n * xi
        # crude whole-term bound: |coef| e^(a L) * O(1/n)
        if abs(coef) * math.exp(min(a * cfg.L_tilde, 500.0)) * 8.0 \
                < 1e-16 * (1.0 + abs(total)) and n > 1:
            break
        val, tail = contour_term_quadrature(n, x, xi, cfg)
        if tail > cfg.tail_target:
            warnings.warn(
                f"term n={n} at (x,xi)=({x:.3g},{xi:.3g}): estimated "
                f"quadrature tail {tail:.2e} exceeds target "
                f"{cfg.tail_target:.2e}; raise T_max",
                TruncationWarning, stacklevel=2)
        total += coef * val
    return total


# ---------------------------------------------------------------------------
# route 3: residue closed form of the same contour terms


@lru_cache(maxsize=64)
def _residue_weights(n: int):
    """Partial-fraction weights w_j = 1 / prod_{k != j} (2^-j - 2^-k)."""
    c = 2.0 ** (-np.arange(n + 1.0))
    w = np.empty(n + 1)
    for j in range(n + 1):
        diff = c[j] - np.delete(c, j)
        w[j] = 1.0 / np.prod(diff)
    return c, w


def contour_term_residues(n: int, a) -> np.ndarray:
    """Exact value of the n-th contour integral at offset a = x - 2^n xi.

    Closing the contour left (a > 0) collects the poles 2^-j, j >= 1, below
    the line; closing right (a < 0) collects only the pole at 1.  Both
    branches agree at a = 0 because the weights sum to zero.
    """
    c, w = _residue_weights(n)
    a_arr = np.asarray(a, dtype=float)
    out = np.empty(a_arr.shape)
    neg = a_arr < 0.0
    if neg.any():
        out[neg] = -w[0] * np.exp(a_arr[neg])
    if (~neg).any():
        ap = a_arr[~neg]
        acc = np.zeros_like(ap)
        for j in range(1, n + 1):
            acc += w[j] * np.exp(ap * c[j])
        out[~neg] = acc
    return float(out) if np.isscalar(a) or a_arr.ndim == 0 else out


def gtilde_exact(x, xi, n_terms: int = 24):
    """Gtilde by the residue closed form; vectorized over x or xi."""
    x_arr = np.asarray(x, dtype=float)
    xi_arr = np.asarray(xi, dtype=float)
    shape = np.broadcast_shapes(x_arr.shape, xi_arr.shape)
    total = np.zeros(shape)
    for n in range(1, n_terms + 1):
        a = x_arr - 2.0 ** n * xi_arr
        coef = term_coefficient(n)
        if abs(coef) * math.exp(float(np.max(a, initial=-np.inf))) \
                < 1e-18 * (1.0 + float(np.max(np.abs(total)))) and n > 2:
            break
        total = total + coef * contour_term_residues(n, a)
    return float(total) if total.ndim == 0 else total


def g_decomposition(x, xi, n_terms: int = 24):
    """G(x, xi) = e^x Q(xi) + Gtilde(x, xi) via the exact residue route."""
    x_arr = np.asarray(x, dtype=float)
    out = np.exp(x_arr) * q_eval(xi) + gtilde_exact(x_arr, xi, n_terms)
    return float(out) if np.isscalar(x) else out


# ---------------------------------------------------------------------------
# bound audits


def bounds_audit(xi_grid=None, x_offsets=None, xi_pairs=None,
                 cfg: GreensEval = GreensEval()) -> dict:
    """Fit the smallest constants in the decay and Lipschitz bounds.

    Fits C0 with |Q(xi)| <= C0 e^(-xi), the growth exponent of Gtilde in
    x - xi against the admissible rate 1 - beta = L_tilde, and the
    Lipschitz constant of xi -> e^xi Q(xi) relative to e^(-xi).
    """
    if xi_grid is None:
        xi_grid = np.linspace(0.0, 20.0, 201)
    if x_offsets is None:
        x_offsets = np.linspace(0.05, 10.0, 120)
    if xi_pairs is None:
        base = np.linspace(0.2, 6.0, 30)
        xi_pairs = [(t, t + h) for t in base for h in (1e-3, 0.1)]

    xi_grid = np.asarray(xi_grid, dtype=float)
    c0_q = float(np.max(np.abs(q_eval(xi_grid)) * np.exp(xi_grid)))

    # Lipschitz of e^xi Q(xi), measured against e^(-xi_lo)
    ratios = []
    for x1, x2 in xi_pairs:
        num = abs(exq_eval(x1) - exq_eval(x2))
        ratios.append(num / (abs(x1 - x2) * math.exp(-min(x1, x2))))
    c0_lip = float(max(ratios))

    # growth of Gtilde(x, xi) in x - xi at fixed xi = 1
    xi0 = 1.0
    xs = xi0 + np.asarray(x_offsets, dtype=float)
    g = gtilde_exact(xs, xi0)
    mask = np.abs(g) > 1e-12
    slope = float(np.polyfit(xs[mask] - xi0, np.log(np.abs(g[mask])), 1)[0])
    c0_g = float(np.max(np.abs(g) * np.exp(-(1.0 - (1.0 - cfg.L_tilde))
                                           * (xs - xi0))))
    return {
        "c0_q": c0_q,
        "c0_q_lipschitz": c0_lip,
        "gtilde_rate_fit": slope,
        "gtilde_rate_allowed": cfg.L_tilde,
        "gtilde_prefactor": c0_g,
        "rate_ok": slope <= cfg.L_tilde + 0.01,
    }
