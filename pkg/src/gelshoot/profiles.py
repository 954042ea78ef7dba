"""Model parameters, profile variable changes, and local series data.

The self-similar profile of the diagonal-kernel coagulation equation can be
written in four equivalent sets of variables:

    F(x)    density profile,
    Phi(x)  = x^(gamma+1) F(x),
    H(y)    with Phi(x) = y H(y), y = x^(1/b),
    phi(z)  = y H(y), z = ln y.

All scalar parameters derived from (gamma, b) live in ModelParams and are
computed once at construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from .errors import DomainError

LN2 = math.log(2.0)

JSON_FIELDS = ("gamma", "b", "a", "sigma", "q", "d", "theta", "b0",
               "eps_delay", "phi_inf")


@dataclass(frozen=True)
class ModelParams:
    """Homogeneity, shooting parameter, and every derived constant.

    gamma     : homogeneity exponent, > 1
    b         : shooting parameter, > 0
    a         : exponent paired with b through b = 1/(1+gamma-a)
    sigma     : 2^(gamma-1-2/b); equals 1 exactly at b = b0
    q         : proportional delay ratio 2^(-1/b), in (0,1)
    d         : constant delay ln2/b of the log-variable equation
    theta     : 2^(gamma-1)
    b0        : 2/(gamma-1), carrier of the explicit power-law solution
    eps_delay : 1 - 2^(-1/b)
    phi_inf   : constant solution 1/(2^(gamma-1)-1)
    """

    gamma: float
    b: float
    a: float
    sigma: float
    q: float
    d: float
    theta: float
    b0: float
    eps_delay: float
    phi_inf: float

    def to_json(self) -> str:
        return json.dumps({k: asdict(self)[k] for k in JSON_FIELDS})

    @staticmethod
    def from_json(text: str) -> "ModelParams":
        data = json.loads(text)
        return make_params(data["gamma"], data["b"])


def make_params(gamma: float, b: float) -> ModelParams:
    """Build a ModelParams, populating all derived fields.

    Raises DomainError for gamma <= 1 or b <= 0.
    """
    gamma = float(gamma)
    b = float(b)
    if not gamma > 1.0:
        raise DomainError(f"gamma must exceed 1, got {gamma}")
    if not b > 0.0:
        raise DomainError(f"b must be positive, got {b}")
    q = 2.0 ** (-1.0 / b)
    p = ModelParams(
        gamma=gamma,
        b=b,
        a=1.0 + gamma - 1.0 / b,
        sigma=2.0 ** (gamma - 1.0 - 2.0 / b),
        q=q,
        d=LN2 / b,
        theta=2.0 ** (gamma - 1.0),
        b0=2.0 / (gamma - 1.0),
        eps_delay=1.0 - q,
        phi_inf=1.0 / (2.0 ** (gamma - 1.0) - 1.0),
    )
    # exact identity d*b = ln2, allowed to drift by a few ulps only
    if abs(p.d * p.b - LN2) > 4.0 * math.ulp(LN2):
        raise DomainError(f"inconsistent delay identity for b={b}")
    return p


# ---------------------------------------------------------------------------
# local power series of the H profile at the origin


@dataclass(frozen=True)
class PowerSeries:
    """Truncated power series around a point, lowest order first."""

    coefficients: np.ndarray
    expansion_point: float = 0.0
    validity_radius_estimate: float = math.inf

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1


def local_series(params: ModelParams, N: int) -> PowerSeries:
    """Series coefficients of H(y) = sum a_n y^n near y = 0.

    a_0 = 1 and

        a_{n+1} = (1 - sigma 2^(-n/b)) / (n+1) * sum_{k<=n} a_k a_{n-k}.

    The radius estimate is 1/c with c = sup_n |1 - sigma 2^(-n/b)|, from the
    geometric coefficient bound |a_n| <= c^n.
    """
    if N < 1:
        raise DomainError("series order N must be >= 1")
    sigma, q = params.sigma, params.q
    a = np.zeros(N + 1)
    a[0] = 1.0
    qn = 1.0  # q^n
    for n in range(N):
        conv = float(np.dot(a[: n + 1], a[n::-1]))
        a[n + 1] = (1.0 - sigma * qn) * conv / (n + 1)
        qn *= q
    c = max(abs(sigma - 1.0), 1.0)
    return PowerSeries(coefficients=a, expansion_point=0.0,
                       validity_radius_estimate=1.0 / c)


def pantograph_series(p: float, eta: float, N: int) -> PowerSeries:
    """Series of the solution to u' = -u(p y)^2 + eta u(y)^2, u(0) = 1.

    Used to bootstrap proportional-delay integrations away from y = 0;
    the profile series above is the special case p = q, eta = 1/sigma after
    rescaling.
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"delay ratio must lie in (0,1), got {p}")
    a = np.zeros(N + 1)
    a[0] = 1.0
    pn = 1.0
    for n in range(N):
        conv = float(np.dot(a[: n + 1], a[n::-1]))
        a[n + 1] = (eta - pn) * conv / (n + 1)
        pn *= p
    c = max(abs(eta - 1.0), 1.0)
    return PowerSeries(coefficients=a, validity_radius_estimate=1.0 / c)


def series_eval(series: PowerSeries, y: float) -> float:
    """Horner evaluation of the truncated series at y."""
    u = y - series.expansion_point
    acc = 0.0
    for c in series.coefficients[::-1]:
        acc = acc * u + c
    return acc


def series_eval_many(series: PowerSeries, y: np.ndarray) -> np.ndarray:
    u = np.asarray(y, dtype=float) - series.expansion_point
    acc = np.zeros_like(u)
    for c in series.coefficients[::-1]:
        acc = acc * u + c
    return acc


def series_error_estimate(series: PowerSeries, y: float) -> float:
    """Last-term magnitude, the usual truncation error proxy."""
    u = abs(y - series.expansion_point)
    n = series.order
    return abs(series.coefficients[n]) * u ** n


def series_switchover(series: PowerSeries, tol: float = 1e-14) -> float:
    """Largest y at which the last few series terms stay below tol.

    Scans a log grid inside the radius estimate; the returned point is where
    stepping should take over from the series.
    """
    a = np.abs(series.coefficients)
    n = series.order
    hi = series.validity_radius_estimate
    if not math.isfinite(hi):
        hi = 1.0
    grid = np.geomspace(1e-8, 0.95 * hi, 400)
    # require the three highest retained orders below tol, not just the last
    tail = (a[n] * grid ** n + a[n - 1] * grid ** (n - 1)
            + a[n - 2] * grid ** (n - 2))
    ok = tail < tol
    if not ok.any():
        return float(grid[0])
    return float(grid[np.nonzero(ok)[0][-1]])


# ---------------------------------------------------------------------------
# explicit reference solutions and their residuals


def phi_equation_residual(params: ModelParams, x: np.ndarray,
                          phi, dphi) -> float:
    """Max residual of b x Phi' = Phi - theta Phi(x/2)^2 + Phi(x)^2."""
    x = np.asarray(x, dtype=float)
    lhs = params.b * x * dphi(x)
    rhs = phi(x) - params.theta * phi(x / 2.0) ** 2 + phi(x) ** 2
    return float(np.max(np.abs(lhs - rhs)))


def h_equation_residual(params: ModelParams, y: np.ndarray, h, dh) -> float:
    """Max residual of H' = -sigma H(q y)^2 + H(y)^2."""
    y = np.asarray(y, dtype=float)
    lhs = dh(y)
    rhs = -params.sigma * h(params.q * y) ** 2 + h(y) ** 2
    return float(np.max(np.abs(lhs - rhs)))


def explicit_solution_residual(params: ModelParams, which: str,
                               grid: np.ndarray) -> float:
    """Residual of a named closed-form solution on a positive grid.

    which: 'Phi0'   power law x^(1/b0) in the Phi equation,
           'PhiInf' the constant 1/(2^(gamma-1)-1) in the Phi equation,
           'HInf'   PhiInf/y in the H equation.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0 or grid[0] <= 0.0 or \
            np.any(np.diff(grid) <= 0.0):
        raise DomainError("grid must be positive and strictly increasing")
    if which == "Phi0":
        e = 1.0 / params.b0
        return phi_equation_residual(
            params, grid, lambda x: x ** e, lambda x: e * x ** (e - 1.0))
    if which == "PhiInf":
        c = params.phi_inf
        return phi_equation_residual(
            params, grid, lambda x: np.full_like(x, c),
            lambda x: np.zeros_like(x))
    if which == "HInf":
        c = params.phi_inf
        return h_equation_residual(
            params, grid, lambda y: c / y, lambda y: -c / y ** 2)
    raise DomainError(f"unknown closed form {which!r}")


# ---------------------------------------------------------------------------
# profile variable changes

VARIANTS = ("F", "Phi", "H", "phi")


@dataclass(frozen=True)
class ProfileGrid:
    """A profile sampled on a grid, tagged with its variable convention.

    For variants F and Phi the abscissa is x, for H it is y = x^(1/b), and
    for phi it is z = ln y.
    """

    variant: str
    abscissa: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DomainError(f"unknown variant {self.variant!r}")


def convert(pg: ProfileGrid, target: str, params: ModelParams) -> ProfileGrid:
    """Change a sampled profile from one variable convention to another."""
    if target not in VARIANTS:
        raise DomainError(f"unknown variant {target!r}")
    if target == pg.variant:
        return pg
    order = {v: i for i, v in enumerate(VARIANTS)}
    cur = pg
    step = 1 if order[target] > order[pg.variant] else -1
    while cur.variant != target:
        nxt = VARIANTS[order[cur.variant] + step]
        cur = _convert_adjacent(cur, nxt, params)
    return cur


def _convert_adjacent(pg: ProfileGrid, target: str,
                      params: ModelParams) -> ProfileGrid:
    t, v = pg.abscissa, pg.values
    pair = (pg.variant, target)
    if pair == ("F", "Phi"):
        return ProfileGrid("Phi", t, t ** (params.gamma + 1.0) * v)
    if pair == ("Phi", "F"):
        return ProfileGrid("F", t, v / t ** (params.gamma + 1.0))
    if pair == ("Phi", "H"):
        y = t ** (1.0 / params.b)
        return ProfileGrid("H", y, v / y)
    if pair == ("H", "Phi"):
        x = t ** params.b
        return ProfileGrid("Phi", x, t * v)
    if pair == ("H", "phi"):
        return ProfileGrid("phi", np.log(t), t * v)
    if pair == ("phi", "H"):
        y = np.exp(t)
        return ProfileGrid("H", y, v / y)
    raise DomainError(f"no conversion {pair}")
