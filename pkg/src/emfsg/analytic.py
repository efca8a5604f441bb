"""Analytic exposure and REBT-DL distributions.

The exposure characteristic functions are built from the Laplace
functional of the base-station pattern:

* PPP: closed forms in terms of ``Omega`` (see :mod:`emfsg.specfun`), with
  one quadrature over the serving distance where the serving link is
  special (5G beamforming, EN-DC co-location).
* beta-GPP: the radial representation as independent thinned
  ``Gamma(k, 1)`` indices, so every expectation is a product over ``k`` of
  one-dimensional integrals.  Products are truncated at ``k_max`` and the
  remaining indices enter through the first-order tail
  ``sum_{k > K} f_k(v) = P(K, v)``.

CDFs and PDFs follow by Gil-Pelaez inversion.  REBT-DL CDFs reduce to the
interference CDF at the root of ``g(I; s) = 0`` (single tier) or of the
joint EN-DC balance, the latter averaged by conditional Monte Carlo.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial import laguerre, legendre
from scipy import interpolate, optimize

from . import _kernels as kern
from .propagation import exposure_from_arrays, g_function, path_loss, solve_g_root
from .spatial import (
    InsufficientTruncationError,
    NetworkParams,
    Window,
    bgpp_serving_density,
    default_kmax,
    sample_radial_batch,
)
from .specfun import CFHandle, QuadratureSpec, gil_pelaez_cdf, gil_pelaez_pdf, tabulate_cf

__all__ = [
    "TruncationSpec",
    "ScenarioSpec",
    "DistributionCurve",
    "BudgetExceededError",
    "cf_exposure_4g",
    "cf_exposure_5g",
    "cf_exposure_endc",
    "exposure_cf",
    "cdf_exposure",
    "pdf_exposure",
    "cf_interference",
    "rebt_cdf_single",
    "cond_serving_law",
    "cdf_interference_5g",
    "rebt_cdf_endc",
]

_RAT_ALIASES = {"4g": "4g", "fourg": "4g", "5g": "5g", "fiveg": "5g", "endc": "endc", "en-dc": "endc"}


def norm_rat(rat: str) -> str:
    try:
        return _RAT_ALIASES[str(rat).lower()]
    except KeyError:
        raise ValueError(f"unknown rat {rat!r}") from None


def norm_model(model: str) -> str:
    m = str(model).lower()
    if m not in ("ppp", "bgpp"):
        raise ValueError(f"unknown model {model!r}")
    return m


class BudgetExceededError(RuntimeError):
    """Conditional Monte Carlo standard error above the requested tolerance."""


@dataclass(frozen=True)
class TruncationSpec:
    """Numerical budget of the analytic engine.

    Attributes:
        k_max_products: beta-GPP product cutoff (``None``: ``default_kmax``).
        s_max: cutoff of the serving-index sums (at most ``k_max_products``).
        quad: Gil-Pelaez quadrature controls.
        mc_integration_n: sample budget of the EN-DC REBT conditional MC.
        per_decade: CF tabulation density in ``t``.
        panel_order: Gauss-Legendre nodes per panel in the index integrals.
        h_order: Gauss-Laguerre order of the fading integral.
    """

    k_max_products: Optional[int] = None
    s_max: Optional[int] = None
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)
    mc_integration_n: int = 200_000
    per_decade: int = 48
    panel_order: int = 8
    h_order: int = 32

    def __post_init__(self):
        for name in ("k_max_products", "s_max"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be positive")
        if self.mc_integration_n < 1 or self.per_decade < 4 or self.h_order < 2:
            raise ValueError("truncation budgets must be positive")

    def kmax(self, beta: float) -> int:
        return self.k_max_products or default_kmax(beta)


@dataclass(frozen=True)
class ScenarioSpec:
    """What to compute: RAT, point-process model and parameters.

    ``seed`` and ``window`` only matter for the EN-DC REBT, whose
    conditional Monte Carlo simulates the 4G layer inside ``window``.
    """

    rat: str = "4g"
    model: str = "ppp"
    params: NetworkParams = field(default_factory=NetworkParams)
    truncation: TruncationSpec = field(default_factory=TruncationSpec)
    seed: int = 0
    window: Window = field(default_factory=Window)

    def __post_init__(self):
        object.__setattr__(self, "rat", norm_rat(self.rat))
        object.__setattr__(self, "model", norm_model(self.model))


@dataclass(frozen=True)
class DistributionCurve:
    """CDF, PDF or J-function sampled on a sorted grid."""

    grid: np.ndarray
    values: np.ndarray
    kind: str = "cdf"
    provenance: str = "analytic"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.shape != v.shape or g.ndim != 1:
            raise ValueError("grid and values must be 1-D arrays of equal length")
        if np.any(np.diff(g) < 0):
            raise ValueError("grid must be sorted")
        if self.kind not in ("cdf", "pdf", "jfunction"):
            raise ValueError(f"bad kind {self.kind!r}")
        if self.provenance not in ("analytic", "monte_carlo", "empirical"):
            raise ValueError(f"bad provenance {self.provenance!r}")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.grid.size

    def quantile(self, q: float) -> float:
        """Smallest grid point whose CDF value reaches ``q`` (linear between)."""
        if self.kind != "cdf":
            raise ValueError("quantiles need a cdf curve")
        v = self.values
        i = int(np.searchsorted(v, q, side="left"))
        if i == 0:
            return float(self.grid[0])
        if i >= v.size:
            return float(self.grid[-1])
        x0, x1, y0, y1 = self.grid[i - 1], self.grid[i], v[i - 1], v[i]
        return float(x0 + (q - y0) * (x1 - x0) / (y1 - y0)) if y1 > y0 else float(x1)


def monotone_cdf(values, report_tol=1e-4):
    """Isotonic (least-squares) cleanup of a CDF; returns values and metadata."""
    raw = np.asarray(values, dtype=float)
    fixed = optimize.isotonic_regression(raw).x if raw.size > 1 else raw.copy()
    fixed = np.clip(fixed, 0.0, 1.0)
    corr = float(np.max(np.abs(fixed - raw))) if raw.size else 0.0
    viol = float(np.max(np.maximum(0.0, -np.diff(raw)))) if raw.size > 1 else 0.0
    meta = {"isotonic_correction": corr, "max_raw_decrease": viol,
            "isotonic_reported": bool(viol > report_tol)}
    if viol > report_tol:
        warnings.warn(f"CDF needed an isotonic correction of {corr:.3g}", RuntimeWarning, stacklevel=3)
    return fixed, meta


# ---------------------------------------------------------------------------
# Layer helpers
# ---------------------------------------------------------------------------

def _layer(params: NetworkParams, rat: str):
    """(lambda, beta, P_eff, eta) of a standalone tier."""
    if rat == "4g":
        return params.lambda4, params.beta4, params.P4_eff, 1.0
    if rat == "5g":
        return params.lambda5, params.beta5, params.P5_eff, params.eta
    raise ValueError("standalone layer must be 4g or 5g")


def _m(t, P, ell):
    return 1.0 / (1.0 - 1j * t * P * ell)


def _hermitian(func):
    """Extend a CF defined for t > 0 to all real t."""

    def wrapped(t, *args, **kwargs):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tt = np.atleast_1d(t).ravel()
        out = np.ones(tt.shape, dtype=complex)
        nz = tt != 0
        if nz.any():
            out[nz] = func(np.abs(tt[nz]), *args, **kwargs)
            neg = tt < 0
            out[neg] = np.conj(out[neg])
        out = out.reshape(np.shape(t))
        return complex(out) if scalar else out

    wrapped.__doc__ = func.__doc__
    wrapped.__name__ = func.__name__
    return wrapped


def _chunks(t, size):
    for i in range(0, t.size, size):
        yield slice(i, min(i + size, t.size))


class _PppRadial:
    """Quadrature over ``x = c r^2`` with ``Exp(1)`` weight (nearest point of PPP(c/pi))."""

    def __init__(self, c, D, order=8, x_top=60.0):
        xD = c * D * D
        self.rule = kern.PanelRule(kern.distance_edges(math.sqrt(xD), math.sqrt(x_top)), order, power=2)
        self.x = self.rule.nodes
        self.w = self.rule.weights * np.exp(-self.x)
        self.r = np.sqrt(self.x / c)
        self.r2 = self.x / c


class _BgppGrid:
    """Index tables of a beta-GPP layer on a panel rule in ``v = c r^2 / beta``."""

    def __init__(self, lam, beta, alpha, D, k_max, order=8, s_max=None):
        self.lam, self.beta, self.alpha, self.D, self.K = lam, beta, alpha, D, k_max
        self.c = math.pi * lam
        self.s_max = min(s_max or k_max, k_max)
        vD = self.c * D * D / beta
        v_top = k_max + 12.0 * math.sqrt(k_max) + 30.0
        self.rule = kern.PanelRule(kern.distance_edges(math.sqrt(vD), math.sqrt(v_top)), order, power=2)
        v = self.rule.nodes
        self.v = v
        self.ell = path_loss(v * beta / self.c, alpha, D)
        self.f = kern.gamma_pdf_table(k_max, v)
        self.Q = kern.gamma_sf_table(k_max, v)
        self.ptail = kern.index_tail_mass(k_max, v)
        self.r_top = math.sqrt(self.rule.upper * beta / self.c)
        self.smask = np.arange(1, k_max + 1) <= self.s_max

    def scale_v(self):
        return 2.0 * self.c / self.beta

    def far(self, t, P):
        return self.scale_v() * kern.far_integral(t, self.r_top, P, self.alpha, self.D)

    def far_pair(self, t, P4, P5, eta):
        return self.scale_v() * kern.far_integral_pair(t, self.r_top, P4, P5, eta, self.alpha, self.D)

    def g(self, t, P):
        """``1 - m`` at the nodes, shape (nt, Nv)."""
        z = 1j * t[:, None] * P * self.ell[None, :]
        return -z / (1.0 - z)

    def serving_sum(self, A, f):
        """``sum_{s <= s_max} f_s prod_{k != s} A_k`` over axis 0."""
        mask = self.smask.reshape((-1,) + (1,) * (A.ndim - 1))
        if self.beta < 1.0:
            # Re A >= 1 - beta > 0, so dividing out A_s is safe and cheaper
            total = np.exp(np.sum(np.log(A), axis=0))
            return total * np.sum(np.where(mask, f / A, 0.0), axis=0)
        E = kern.exclusive_products(A)
        return np.sum(np.where(mask, f * E, 0.0), axis=0)

    @property
    def chunk(self):
        return max(1, int(3e6 // (self.K * self.v.size)))

    def upsilon(self, u):
        return bgpp_serving_density(u, self.beta, self.K)


_GRID_CACHE: dict = {}


def _bgpp_grid(lam, beta, alpha, D, trunc: TruncationSpec):
    key = (lam, beta, alpha, D, trunc.kmax(beta), trunc.panel_order, trunc.s_max)
    if key not in _GRID_CACHE:
        if len(_GRID_CACHE) > 8:
            _GRID_CACHE.clear()
        _GRID_CACHE[key] = _BgppGrid(lam, beta, alpha, D, trunc.kmax(beta), trunc.panel_order, trunc.s_max)
    return _GRID_CACHE[key]


# ---------------------------------------------------------------------------
# Exposure characteristic functions
# ---------------------------------------------------------------------------


def _ppp_total_log(t, lam, P, alpha, D):
    return -2.0 * math.pi * lam * kern.far_integral(t, 0.0, P, alpha, D)


def _bgpp_total_log(G: _BgppGrid, t, P, weight=1.0):
    """log E[exp(j t sum P h l)] over all points of a beta-GPP, times ``weight``.

    ``weight`` scales the retention probability (used for the
    non-co-located part of an EN-DC layer).
    """
    b = G.beta * weight
    out = np.empty(t.size, dtype=complex)
    for sl in _chunks(t, G.chunk):
        g = G.g(t[sl], P)
        I0 = (G.f[:, None, :] * g[None]) @ G.rule.weights
        tail = (G.ptail * g) @ G.rule.weights + G.far(t[sl], P)
        out[sl] = np.sum(np.log(1.0 - b * I0), axis=0) - b * tail
    return out


@_hermitian
def cf_exposure_4g(t, params: NetworkParams, model: str = "ppp", trunc: Optional[TruncationSpec] = None):
    """CF of the total 4G exposure (every site radiates towards the user).

    PPP: ``exp(-2 pi lambda int_0^inf (1 - m) r dr)`` in closed form.
    beta-GPP: ``prod_k (1 - beta int f_k (1 - m))``.
    """
    model = norm_model(model)
    trunc = trunc or TruncationSpec()
    lam, beta, P, _ = _layer(params, "4g")
    if model == "ppp":
        return np.exp(_ppp_total_log(t, lam, P, params.alpha, params.D))
    G = _bgpp_grid(lam, beta, params.alpha, params.D, trunc)
    return np.exp(_bgpp_total_log(G, t, P))


@_hermitian
def cf_exposure_5g(t, params: NetworkParams, model: str = "ppp", trunc: Optional[TruncationSpec] = None):
    """CF of the standalone 5G exposure.

    The serving link is always aligned and contributes ``m(t, r_s)``; other
    sites interfere with probability ``eta``.  The serving variable is
    integrated out numerically.
    """
    model = norm_model(model)
    trunc = trunc or TruncationSpec()
    lam, beta, P, eta = _layer(params, "5g")
    return _cf_tier_with_server(t, lam, beta, P, eta, params.alpha, params.D, model, trunc)


def _cf_tier_with_server(t, lam, beta, P, eta, alpha, D, model, trunc):
    out = np.empty(t.size, dtype=complex)
    if model == "ppp":
        c = math.pi * lam
        rad = _PppRadial(c, D, trunc.panel_order)
        ell = path_loss(rad.r2, alpha, D)
        for sl in _chunks(t, 64):
            tt = t[sl][:, None]
            F = kern.far_integral(tt, rad.r[None, :], P, alpha, D)
            out[sl] = (_m(tt, P, ell) * np.exp(-2.0 * c * eta * F)) @ rad.w
        return out
    G = _bgpp_grid(lam, beta, alpha, D, trunc)
    w = G.rule.weights
    for sl in _chunks(t, G.chunk):
        tt = t[sl]
        g = G.g(tt, P)
        I = G.rule.tail(G.f[:, None, :] * g[None])
        A = 1.0 - beta + beta * (G.Q[:, None, :] - eta * I)
        tail = G.rule.tail(G.ptail * g) + G.far(tt, P)[:, None]
        S = G.serving_sum(A, G.f[:, None, :])
        out[sl] = beta * ((1.0 - g) * S * np.exp(-beta * eta * tail)) @ w
    return out


@_hermitian
def cf_exposure_endc(t, params: NetworkParams, model: str = "ppp", trunc: Optional[TruncationSpec] = None):
    """CF of the EN-DC exposure.

    5G radios sit on a fraction ``p`` of the 4G sites (independent marks);
    the user is served in 5G by the nearest co-located site, whose beam is
    aligned, while the other co-located sites interfere with probability
    ``eta``.  Every 4G site radiates towards the user.
    """
    model = norm_model(model)
    trunc = trunc or TruncationSpec()
    p, eta, alpha, D = params.p, params.eta, params.alpha, params.D
    P4, P5 = params.P4_eff, params.P5_eff
    lam, beta = params.lambda4, params.beta4
    out = np.empty(t.size, dtype=complex)
    if model == "ppp":
        if p == 0:
            return np.exp(_ppp_total_log(t, lam, P4, alpha, D))
        # independent thinning: non-co-located sites form PPP((1-p) lam)
        c5 = math.pi * p * lam
        rad = _PppRadial(c5, D, trunc.panel_order)
        ell = path_loss(rad.r2, alpha, D)
        for sl in _chunks(t, 64):
            tt = t[sl][:, None]
            F2 = kern.far_integral_pair(tt, rad.r[None, :], P4, P5, eta, alpha, D)
            serv = _m(tt, P4, ell) * _m(tt, P5, ell) * np.exp(-2.0 * c5 * F2)
            out[sl] = np.exp((1.0 - p) * _ppp_total_log(t[sl], lam, P4, alpha, D)) * (serv @ rad.w)
        return out
    G = _bgpp_grid(lam, beta, alpha, D, trunc)
    w = G.rule.weights
    for sl in _chunks(t, G.chunk):
        tt = t[sl]
        g4 = G.g(tt, P4)
        m4 = 1.0 - g4
        m5 = _m(tt[:, None], P5, G.ell[None, :])
        g2 = 1.0 - m4 * (1.0 - eta + eta * m5)
        I4 = (G.f[:, None, :] * g4[None]) @ w
        J = G.rule.tail(G.f[:, None, :] * g2[None])
        base = 1.0 - beta + beta * (1.0 - p) * (1.0 - I4)
        C = base[:, :, None] + beta * p * (G.Q[:, None, :] - J)
        tail4 = (G.ptail * g4) @ w + G.far(tt, P4)
        tail2 = G.rule.tail(G.ptail * g2) + G.far_pair(tt, P4, P5, eta)[:, None]
        logt = -beta * (1.0 - p) * tail4[:, None] - beta * p * tail2
        S = G.serving_sum(C, G.f[:, None, :])
        served = beta * p * ((m4 * m5) * S * np.exp(logt)) @ w
        # no co-located site among the first k_max indices (mass -> 0 for p > 0)
        none = np.exp(np.sum(np.log(base), axis=0) - beta * (1.0 - p) * tail4)
        out[sl] = served + none
    return out


# ---------------------------------------------------------------------------
# Tabulated handles and exposure curves
# ---------------------------------------------------------------------------

_CF_FUNCS = {"4g": cf_exposure_4g, "5g": cf_exposure_5g, "endc": cf_exposure_endc}
_HANDLE_CACHE: dict = {}


def _power_scales(params: NetworkParams, rat: str):
    """(largest single-link power, typical exposure) of a scenario."""
    if rat == "4g":
        P, lam = params.P4_eff, params.lambda4
    elif rat == "5g":
        P, lam = params.P5_eff, params.lambda5
    else:
        P, lam = params.P4_eff + params.P5_eff, params.lambda4
    r_med = math.sqrt(math.log(2.0) / (math.pi * lam))
    typ = P * float(path_loss(r_med**2, params.alpha, params.D))
    return P, typ


def tabulate_adaptive(func, t_lo, t_hi, per_decade, cutoff=1e-13, chunk=32, scale=None, meta=None):
    """Tabulate ``func`` on a log grid, stopping once ``|phi|`` stays below ``cutoff``."""
    n = int(math.ceil(per_decade * math.log10(t_hi / t_lo))) + 1
    t = np.geomspace(t_lo, t_hi, n)
    vals = []
    stop = n
    for sl in _chunks(t, chunk):
        v = np.asarray(func(t[sl]), dtype=complex)
        vals.append(v)
        if np.all(np.abs(v) < cutoff):
            stop = sl.stop
            break
    phi = np.concatenate(vals)
    return tabulate_cf((t[:stop], phi[:stop]), None, None, scale=scale, meta=meta)


def exposure_cf(scenario: ScenarioSpec) -> CFHandle:
    """Tabulated exposure CF of a scenario (cached per scenario)."""
    key = ("exposure", scenario.rat, scenario.model, scenario.params, scenario.truncation)
    if key in _HANDLE_CACHE:
        return _HANDLE_CACHE[key]
    tr = scenario.truncation
    P, typ = _power_scales(scenario.params, scenario.rat)
    f = _CF_FUNCS[scenario.rat]

    def func(t):
        return f(t, scenario.params, scenario.model, tr)

    h = tabulate_adaptive(func, 1e-3 * tr.quad.t_start / P, 1e9 / typ, tr.per_decade, scale=P,
                          meta={"rat": scenario.rat, "model": scenario.model, "kind": "exposure"})
    if len(_HANDLE_CACHE) > 32:
        _HANDLE_CACHE.clear()
    _HANDLE_CACHE[key] = h
    return h


def cdf_exposure(scenario: ScenarioSpec, tau_grid) -> DistributionCurve:
    """Exposure CDF (watts) by Gil-Pelaez inversion of the scenario CF."""
    tau = np.asarray(tau_grid, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau grid must be nonnegative")
    cf = exposure_cf(scenario)
    raw, err = gil_pelaez_cdf(cf, tau, scenario.truncation.quad, full_output=True)
    vals, meta = monotone_cdf(raw)
    meta.update(max_error_estimate=float(np.max(err)) if err.size else 0.0,
                rat=scenario.rat, model=scenario.model)
    return DistributionCurve(tau, vals, "cdf", "analytic", meta)


def pdf_exposure(scenario: ScenarioSpec, tau_grid) -> DistributionCurve:
    """Exposure PDF (per watt).

    The absolute tolerance of the quadrature applies to the density of the
    exposure divided by its typical value, so it is rescaled here.
    """
    tau = np.asarray(tau_grid, dtype=float)
    cf = exposure_cf(scenario)
    _, typ = _power_scales(scenario.params, scenario.rat)
    q = scenario.truncation.quad
    quad = dataclasses.replace(q, abs_tol=q.abs_tol / typ)
    vals, err = gil_pelaez_pdf(cf, tau, quad, full_output=True)
    meta = {"max_error_estimate": float(np.max(err)) if err.size else 0.0,
            "rat": scenario.rat, "model": scenario.model}
    return DistributionCurve(tau, vals, "pdf", "analytic", meta)


# ---------------------------------------------------------------------------
# Conditional interference and single-tier REBT
# ---------------------------------------------------------------------------

_X_GRID = np.logspace(-20.0, 3.0, 12 * 23 + 1)
_H_CACHE: dict = {}


class CurveBank:
    """Many CDFs on one log-spaced grid, evaluated by monotone cubic interpolation."""

    def __init__(self, x_grid, F):
        self.logx = np.log(np.asarray(x_grid, dtype=float))
        self.F = np.clip(np.asarray(F, dtype=float), 0.0, 1.0)  # (ncurves, nx)
        pch = interpolate.PchipInterpolator(self.logx, self.F.T, axis=0)
        self._c = pch.c  # (4, nx - 1, ncurves)
        self._step = self.logx[1] - self.logx[0]

    def __call__(self, curve, x):
        curve, x = np.broadcast_arrays(np.asarray(curve, dtype=int), np.asarray(x, dtype=float))
        with np.errstate(divide="ignore"):
            lx = np.log(x)
        pos = np.nan_to_num((lx - self.logx[0]) / self._step, neginf=-1.0, posinf=-1.0)
        i = np.clip(np.floor(pos).astype(np.int64), 0, self.logx.size - 2)
        d = np.where(np.isfinite(lx), lx - self.logx[i], 0.0)
        c = self._c
        val = ((c[0, i, curve] * d + c[1, i, curve]) * d + c[2, i, curve]) * d + c[3, i, curve]
        val = np.where(lx <= self.logx[0], self.F[curve, 0], val)
        val = np.where(lx >= self.logx[-1], self.F[curve, -1], val)
        return np.clip(val, 0.0, 1.0)


def _outer_rule(scale_var_break, top, order=4):
    return kern.PanelRule(kern.distance_edges(scale_var_break, top, ratio=1.5, max_step=1.0), order, power=2)


def _ppp_cond_cf(lam, P, eta, alpha, D, r):
    c = math.pi * lam

    def func(t):
        return np.exp(-2.0 * c * eta * kern.far_integral(t, r, P, alpha, D))

    return func


def _bgpp_cond_interf(G: _BgppGrid, t, P, eta, u):
    """CF of the interference given the serving variable ``u``; shape (nt, nu)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    beta = G.beta
    M = G.rule.tail_matrix(u)
    Qu = kern.gamma_sf_table(G.K, u)
    fu = kern.gamma_pdf_table(G.K, u)
    ups = beta * G.serving_sum(1.0 - beta + beta * Qu, fu)
    out = np.empty((t.size, u.size), dtype=complex)
    for sl in _chunks(t, G.chunk):
        tt = t[sl]
        g = G.g(tt, P)
        I = (G.f[:, None, :] * g[None]) @ M.T
        A = 1.0 - beta + beta * (Qu[:, None, :] - eta * I)
        tail = (G.ptail * g) @ M.T + G.far(tt, P)[:, None]
        S = G.serving_sum(A, fu[:, None, :])
        out[sl] = beta * S * np.exp(-beta * eta * tail) / ups
    return out


def cf_interference(t, params: NetworkParams, rat: str, model: str, r_serving,
                    trunc: Optional[TruncationSpec] = None):
    """CF of a standalone tier's interference given the serving distance(s) in metres.

    Returns an array of shape ``(len(t), len(r_serving))``.
    """
    rat, model = norm_rat(rat), norm_model(model)
    trunc = trunc or TruncationSpec()
    lam, beta, P, eta = _layer(params, rat)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    r = np.atleast_1d(np.asarray(r_serving, dtype=float))
    if model == "ppp":
        return _ppp_cond_cf(lam, P, eta, params.alpha, params.D, r[None, :])(t[:, None])
    G = _bgpp_grid(lam, beta, params.alpha, params.D, trunc)
    return _bgpp_cond_interf(G, t, P, eta, G.c * r**2 / beta)


def _invert_family(cf_funcs, scales, quad, x_grid=_X_GRID):
    F = np.empty((len(cf_funcs), x_grid.size))
    err = 0.0
    for j, (f, sc) in enumerate(zip(cf_funcs, scales)):
        h = f if isinstance(f, CFHandle) else CFHandle(f, "exponential", scale=sc)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            vals, e = gil_pelaez_cdf(h, x_grid, quad, full_output=True)
        F[j] = np.maximum.accumulate(vals)
        err = max(err, float(np.max(e)))
    return F, err


def _tab_family(t, phi, scale):
    """CFHandles from columns of a tabulated family ``phi[t, j]``."""
    hs = []
    for j in range(phi.shape[1]):
        col = phi[:, j]
        keep = np.flatnonzero(np.abs(col) > 1e-13)
        last = min(keep[-1] + 2, t.size - 1) if keep.size else 1
        hs.append(tabulate_cf((t[: last + 1], col[: last + 1]), None, None, scale=scale))
    return hs


def _t_family_grid(P, typ, per_decade, quad):
    return np.geomspace(1e-3 * quad.t_start / P, 1e9 / typ, int(per_decade * math.log10(1e12 * P / (quad.t_start * typ))) + 1)


def _tabulate_family(func, t, chunk=64, cutoff=1e-13):
    """Evaluate ``func(t_chunk) -> (nt, n)`` until every column has decayed."""
    rows = []
    for sl in _chunks(t, chunk):
        v = func(t[sl])
        rows.append(v)
        if np.all(np.abs(v) < cutoff):
            break
    phi = np.concatenate(rows, axis=0)
    return t[: phi.shape[0]], phi


def _single_tier_tables(scenario: ScenarioSpec):
    key = ("single", scenario.rat, scenario.model, scenario.params, scenario.truncation)
    if key in _H_CACHE:
        return _H_CACHE[key]
    pr, tr = scenario.params, scenario.truncation
    lam, beta, P, eta = _layer(pr, scenario.rat)
    c = math.pi * lam
    if scenario.model == "ppp":
        rule = _outer_rule(math.sqrt(c * pr.D**2), math.sqrt(40.0))
        x = rule.nodes
        wts = rule.weights * np.exp(-x)
        r = np.sqrt(x / c)
        fam = _ppp_cond_cf(lam, P, eta, pr.alpha, pr.D, r[None, :])
        _, typ = _power_scales(pr, scenario.rat)
        tg, phi = _tabulate_family(lambda tt: fam(tt[:, None]), _t_family_grid(P, typ, tr.per_decade, tr.quad))
        funcs = _tab_family(tg, phi, P)
    else:
        G = _bgpp_grid(lam, beta, pr.alpha, pr.D, tr)
        rule = _outer_rule(math.sqrt(c * pr.D**2 / beta), math.sqrt(40.0 / beta))
        u = rule.nodes
        wts = rule.weights * G.upsilon(u)
        r = np.sqrt(u * beta / c)
        _, typ = _power_scales(pr, scenario.rat)
        tg = _t_family_grid(P, typ, tr.per_decade, tr.quad)
        tg, phi = _tabulate_family(lambda tt: _bgpp_cond_interf(G, tt, P, eta, u), tg)
        funcs = _tab_family(tg, phi, P)
    mass = float(np.sum(wts))
    if abs(mass - 1.0) > 1e-3:
        raise InsufficientTruncationError(f"serving-law quadrature mass {mass:.6f}")
    F, err = _invert_family(funcs, [P] * len(funcs), tr.quad)
    out = {"r": r, "w": wts, "bank": CurveBank(_X_GRID, F), "P": P, "inv_err": err, "mass": mass}
    if len(_H_CACHE) > 16:
        _H_CACHE.clear()
    _H_CACHE[key] = out
    return out


def _h_rules(order):
    hl, wl = laguerre.laggauss(order)
    hc, wc = kern.gauss_legendre_log_panels(1e-14, 90.0, 26, 8)
    return (hl, wl), (hc, wc * np.exp(-hc))


def _fading_average(Fvals_fn, order):
    """E_h[F(h)] with the Laguerre rule, falling back to log-h panels.

    ``Fvals_fn(h)`` returns values with the node axis last.  The fallback is
    used wherever the Laguerre samples contain a zero or vary by more than a
    factor 1e3.
    """
    (hl, wl), (hc, wc) = _h_rules(order)
    vl = Fvals_fn(hl)
    est = vl @ wl
    vmin, vmax = vl.min(axis=-1), vl.max(axis=-1)
    bad = (vmin <= 0) | (vmax > 1e3 * np.maximum(vmin, 1e-300))
    gap = np.zeros(est.shape)
    if np.any(bad):
        vc = Fvals_fn(hc)
        alt = vc @ wc
        gap = np.where(bad, np.abs(alt - est), 0.0)
        est = np.where(bad, alt, est)
    return est, gap


def rebt_cdf_single(y_grid, scenario: ScenarioSpec) -> DistributionCurve:
    """CDF of REBT-DL in a single-tier (4G or 5G) network.

    ``P(REBT <= y) = E_theta E_h F_I(I*(P l(theta) h, y) | theta)`` where
    ``I*`` is the root of ``g(I; s) = 0`` for bandwidth ``W`` of the tier.
    """
    if scenario.rat == "endc":
        raise ValueError("use rebt_cdf_endc for EN-DC")
    y = np.atleast_1d(np.asarray(y_grid, dtype=float))
    if np.any(y <= 0):
        raise ValueError("y grid must be positive")
    pr = scenario.params
    W = pr.W4 if scenario.rat == "4g" else pr.W5
    tab = _single_tier_tables(scenario)
    ell = path_loss(tab["r"] ** 2, pr.alpha, pr.D)
    nodes = np.arange(ell.size)
    bank = tab["bank"]

    def F_of_h(h):
        s = tab["P"] * ell[None, :, None] * h[None, None, :]
        I = solve_g_root(np.broadcast_to(s, (y.size,) + s.shape[1:]), y[:, None, None], W)
        return bank(nodes[None, :, None], I)

    inner, gap = _fading_average(F_of_h, scenario.truncation.h_order)
    vals_raw = inner @ tab["w"]
    vals, meta = monotone_cdf(vals_raw)
    meta.update(
        h_rule_gap=float(np.max(gap @ tab["w"])) if gap.size else 0.0,
        inversion_error=tab["inv_err"],
        serving_mass=tab["mass"],
        rat=scenario.rat,
        model=scenario.model,
    )
    return DistributionCurve(y, vals, "cdf", "analytic", meta)


# ---------------------------------------------------------------------------
# EN-DC: conditional 5G serving law, 5G interference and the EN-DC REBT-DL CDF
# ---------------------------------------------------------------------------


def _pair_sum(N, a, b, beta, smask=None):
    """``sum_s a_s sum_{n != s} b_n prod_{k != s, n} N_k`` over axis 0.

    ``a`` and ``b`` broadcast against ``N``; ``smask`` restricts ``s``.
    """
    a = np.broadcast_to(a, N.shape)
    b = np.broadcast_to(b, N.shape)
    if smask is not None:
        a = np.where(smask.reshape((-1,) + (1,) * (N.ndim - 1)), a, 0.0)
    if beta < 1.0:
        total = np.exp(np.sum(np.log(N), axis=0))
        bn = b / N
        return total * np.sum(a / N * (np.sum(bn, axis=0)[None] - bn), axis=0)
    # beta = 1: factors may vanish, so use prefix/suffix products and their
    # first-order companions instead of dividing
    K = N.shape[0]
    one = np.ones(N.shape[1:], dtype=N.dtype)
    pre, dpre = [one], [0.0 * one]
    for k in range(K - 1):
        dpre.append(dpre[-1] * N[k] + pre[-1] * b[k])
        pre.append(pre[-1] * N[k])
    suf, dsuf = [one], [0.0 * one]
    for k in range(K - 1, 0, -1):
        dsuf.append(dsuf[-1] * N[k] + suf[-1] * b[k])
        suf.append(suf[-1] * N[k])
    suf, dsuf = suf[::-1], dsuf[::-1]
    out = 0.0 * one
    for s in range(K):
        out = out + a[s] * (dpre[s] * suf[s] + pre[s] * dsuf[s])
    return out


@dataclass(frozen=True)
class ConditionalServingLaw:
    """Density of the 5G serving distance ``r5`` given a non-co-located 4G server at ``r4``.

    ``mass`` is the probability that the 4G server is not co-located (the
    integral of the unnormalised density); with ``normalized`` the density
    integrates to one.
    """

    model: str
    r4: float
    mass: float
    normalized: bool
    pdf: object = field(repr=False)

    def __call__(self, r5):
        return self.pdf(np.asarray(r5, dtype=float))


def _bgpp_pair_density(G: _BgppGrid, p, u4, u5):
    """Unnormalised joint law of (non-co-located 4G server, 5G server) over ``u5``, divided by Upsilon(u4)."""
    beta = G.beta
    u5 = np.atleast_1d(np.asarray(u5, dtype=float))
    Q4 = kern.gamma_sf_table(G.K, [u4])
    f4 = kern.gamma_pdf_table(G.K, [u4])
    Q5 = kern.gamma_sf_table(G.K, u5)
    f5 = kern.gamma_pdf_table(G.K, u5)
    N = 1.0 - beta + beta * ((1.0 - p) * Q4 + p * Q5)
    pair = _pair_sum(N, f4, f5, beta, G.smask)
    ups = float(G.upsilon([u4])[0])
    return np.where(u5 >= u4, beta * (1.0 - p) * beta * p * pair / ups, 0.0)


def _excess_rule(order=8, top=80.0):
    """Panels in ``w = u5 - u4 >= 0`` (geometric from 1e-4, then up to ``top``)."""
    edges = np.concatenate([[0.0], np.geomspace(1e-4, top, 48)])
    return kern.PanelRule(edges, order, power=1.0)


def cond_serving_law(model, theta4, params: NetworkParams, normalized: bool = False,
                     trunc: Optional[TruncationSpec] = None) -> ConditionalServingLaw:
    """Law of the 5G serving distance given a non-co-located 4G server at ``theta4`` metres.

    PPP: ``(1 - p) 2 pi p lam4 r5 exp(-pi p lam4 (r5^2 - r4^2))`` for
    ``r5 > r4``.  beta-GPP: the pair sum over the 4G and 5G serving indices
    with products truncated at ``k_max``, divided by ``Upsilon(u4)``.

    Raises:
        InsufficientTruncationError: if the beta-GPP density misses more
            than 1e-3 of its expected mass ``1 - p``.
    """
    model = norm_model(model)
    trunc = trunc or TruncationSpec()
    r4 = float(theta4)
    p, lam = params.p, params.lambda4
    if not 0.0 < p <= 1.0:
        raise ValueError("EN-DC needs 0 < p <= 1")
    mass = 1.0 - p
    if model == "ppp":
        c5 = math.pi * p * lam

        def pdf(r5):
            dens = 2.0 * c5 * r5 * np.exp(-c5 * (r5**2 - r4**2))
            dens = np.where(r5 >= r4, dens, 0.0)
            return dens if normalized else mass * dens

        return ConditionalServingLaw(model, r4, mass, normalized, pdf)
    G = _bgpp_grid(lam, params.beta4, params.alpha, params.D, trunc)
    u4 = G.c * r4**2 / G.beta
    rule = _excess_rule(trunc.panel_order)
    num_mass = float(_bgpp_pair_density(G, p, u4, u4 + rule.nodes) @ rule.weights)
    if abs(num_mass - mass) > 1e-3:
        raise InsufficientTruncationError(f"conditional serving mass {num_mass:.6f}, expected {mass:.6f}")
    jac = 2.0 * G.c / G.beta

    def pdf(r5):
        u5 = G.c * np.asarray(r5, dtype=float) ** 2 / G.beta
        d = _bgpp_pair_density(G, p, u4, u5.ravel()).reshape(u5.shape) * jac * r5
        return d / num_mass if normalized else d

    return ConditionalServingLaw(model, r4, num_mass, normalized, pdf)


def _bgpp_i5_parts(G: _BgppGrid, t, P5, eta, U):
    """5G interference integrals of co-located sites beyond ``U``: (I_k, tail), shapes (K, nt, nU), (nt, nU)."""
    M = G.rule.tail_matrix(U)
    g5 = G.g(t, P5)
    I5 = (G.f[:, None, :] * g5[None]) @ M.T
    tail = (G.ptail * g5) @ M.T + G.far(t, P5)[:, None]
    return I5, tail


def _bgpp_log_numer(G: _BgppGrid, p, eta, u4, U, I5, tail5, colocated):
    """log of the unnormalised conditional 5G-interference CF, shape (nt, nU).

    ``colocated``: the 4G server at ``u4`` also serves 5G (``U`` must be
    ``[u4]``).  Otherwise the 5G server sits at each ``U`` (``U >= u4``).
    """
    beta = G.beta
    Q4 = kern.gamma_sf_table(G.K, [u4])[:, :, None]  # (K, 1, 1)
    f4 = kern.gamma_pdf_table(G.K, [u4])[:, :, None]
    if colocated:
        N = 1.0 - beta + beta * Q4 - beta * p * eta * I5
        S = G.serving_sum(N, f4)
    else:
        QU = kern.gamma_sf_table(G.K, U)[:, None, :]
        fU = kern.gamma_pdf_table(G.K, U)[:, None, :]
        N = 1.0 - beta + beta * (1.0 - p) * Q4 + beta * p * (QU - eta * I5)
        S = _pair_sum(N, f4, fU, beta, G.smask)
    return np.log(S + 0j) - beta * p * eta * tail5


def _i5_chunk(G: _BgppGrid, nU):
    return max(1, int(2e6 // (G.K * max(nU, G.v.size))))


def _endc_cond_cf(scenario: ScenarioSpec, r4, mode, r5=None):
    """Conditional CF of the EN-DC 5G interference as a function of t > 0."""
    pr, tr = scenario.params, scenario.truncation
    p, eta, lam, P5 = pr.p, pr.eta, pr.lambda4, pr.P5_eff
    c5 = math.pi * p * lam
    if scenario.model == "ppp":
        if mode == "colocated" or r5 is not None:
            rs = np.atleast_1d(r4 if mode == "colocated" else r5)
            return lambda t: np.exp(-2.0 * c5 * eta * kern.far_integral(t[:, None], rs[None, :], P5, pr.alpha, pr.D))[:, 0]
        rule = _PppRadial(1.0, 0.0, tr.panel_order, x_top=60.0)
        rs = np.sqrt(r4**2 + rule.x / c5)
        w = rule.w / np.sum(rule.w)
        return lambda t: np.exp(-2.0 * c5 * eta * kern.far_integral(t[:, None], rs[None, :], P5, pr.alpha, pr.D)) @ w
    G = _bgpp_grid(lam, pr.beta4, pr.alpha, pr.D, tr)
    u4 = G.c * r4**2 / G.beta
    if mode == "colocated":
        U, wts = np.array([u4]), np.ones(1)
    elif r5 is not None:
        U, wts = np.array([max(G.c * r5**2 / G.beta, u4)]), np.ones(1)
    else:
        rule = _excess_rule(tr.panel_order)
        U, wts = u4 + rule.nodes, rule.weights
    coloc = mode == "colocated"
    z0 = np.zeros((G.K, 1, U.size))
    log0 = _bgpp_log_numer(G, p, eta, u4, U, z0, np.zeros((1, U.size)), coloc)[0]
    ref = float(np.max(log0.real))
    norm = np.exp(log0 - ref) @ wts

    def func(t):
        out = np.empty(t.size, dtype=complex)
        for sl in _chunks(t, _i5_chunk(G, U.size)):
            I5, tail = _bgpp_i5_parts(G, t[sl], P5, eta, U)
            lg = _bgpp_log_numer(G, p, eta, u4, U, I5, tail, coloc)
            out[sl] = (np.exp(lg - ref) @ wts) / norm
        return out

    return func


def cdf_interference_5g(x, theta, mode, scenario: ScenarioSpec) -> DistributionCurve:
    """CDF of the EN-DC 5G interference given the serving geometry.

    Args:
        x: interference levels (watts).
        theta: 4G serving distance ``r4`` in metres, or a pair ``(r4, r5)``
            to also fix the 5G serving distance in the non-co-located mode.
        mode: ``"colocated"`` (the 4G server also serves 5G) or
            ``"non_colocated"`` (averaged over :func:`cond_serving_law`
            unless ``r5`` is given).
        scenario: an EN-DC scenario.
    """
    if scenario.rat != "endc":
        raise ValueError("cdf_interference_5g needs an endc scenario")
    if mode not in ("colocated", "non_colocated"):
        raise ValueError(f"unknown mode {mode!r}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    r4, r5 = (float(theta[0]), float(theta[1])) if np.ndim(theta) else (float(theta), None)
    pr = scenario.params
    if mode == "non_colocated" and pr.p >= 1.0:
        raise ValueError("with p = 1 the 4G server is always co-located")
    if pr.eta == 0.0 or pr.p == 0.0:
        return DistributionCurve(x, (x >= 0).astype(float), "cdf", "analytic", {"mode": mode, "atom_at_zero": True})
    func = _hermitian(_endc_cond_cf(scenario, r4, mode, r5))
    tr = scenario.truncation
    P = pr.P5_eff
    _, typ = _power_scales(pr, "5g")
    h = tabulate_adaptive(func, 1e-3 * tr.quad.t_start / P, 1e9 / typ, tr.per_decade, scale=P)
    raw, err = gil_pelaez_cdf(h, x, tr.quad, full_output=True)
    vals, meta = monotone_cdf(raw)
    meta.update(mode=mode, r4=r4, r5=r5, max_error_estimate=float(np.max(err)) if err.size else 0.0)
    return DistributionCurve(x, vals, "cdf", "analytic", meta)


_U_GRID = np.geomspace(1e-3, 60.0, 19)  # serving variables of the beta-GPP tables
_X5_GRID = np.geomspace(1e-4, 40.0, 29)  # pi p lam4 r5^2 for the PPP tables


def _endc_tables(scenario: ScenarioSpec):
    """Conditional 5G-interference CDFs on a grid of serving geometries.

    PPP: one family over the 5G serving distance (the same law serves both
    modes).  beta-GPP: co-located curves over ``u4`` and non-co-located
    curves over pairs ``u4 <= u5``.
    """
    key = ("endc", scenario.model, scenario.params, scenario.truncation)
    if key in _H_CACHE:
        return _H_CACHE[key]
    pr, tr = scenario.params, scenario.truncation
    p, eta, lam, P5 = pr.p, pr.eta, pr.lambda4, pr.P5_eff
    _, typ = _power_scales(pr, "5g")
    tg = _t_family_grid(P5, typ, tr.per_decade, tr.quad)
    out = {"model": scenario.model}
    if scenario.model == "ppp":
        c5 = math.pi * p * lam
        r5 = np.sqrt(_X5_GRID / c5)
        fam = _ppp_cond_cf(p * lam, P5, eta, pr.alpha, pr.D, r5[None, :])
        t1, phi = _tabulate_family(lambda tt: fam(tt[:, None]), tg)
        F, err = _invert_family(_tab_family(t1, phi, P5), [P5] * r5.size, tr.quad)
        out.update(bank=CurveBank(_X_GRID, F), grid=np.log(_X5_GRID), c=c5, inv_err=err)
    else:
        G = _bgpp_grid(lam, pr.beta4, pr.alpha, pr.D, tr)
        U = _U_GRID
        n = U.size
        pairs = [(i, j) for i in range(n) for j in range(i, n)]
        z0 = np.zeros((G.K, 1, n))
        ref_c = [np.real(_bgpp_log_numer(G, p, eta, U[i], U[i:i + 1], z0[..., :1], np.zeros((1, 1)), True))[0, 0]
                 for i in range(n)]
        ref_n = [np.real(_bgpp_log_numer(G, p, eta, U[i], U[i:], z0[..., i:], np.zeros((1, n - i)), False))[0]
                 if p < 1.0 else np.zeros(n - i) for i in range(n)]

        def fam(tt):
            cols = np.empty((tt.size, n + len(pairs)), dtype=complex)
            for sl in _chunks(tt, _i5_chunk(G, n)):
                I5, tail = _bgpp_i5_parts(G, tt[sl], P5, eta, U)
                k = n
                for i in range(n):
                    lg = _bgpp_log_numer(G, p, eta, U[i], U[i:i + 1], I5[..., i:i + 1], tail[:, i:i + 1], True)
                    cols[sl, i] = np.exp(lg[:, 0] - ref_c[i])
                    if p < 1.0:
                        lg = _bgpp_log_numer(G, p, eta, U[i], U[i:], I5[..., i:], tail[:, i:], False)
                        cols[sl, k:k + n - i] = np.exp(lg - ref_n[i])
                    else:
                        cols[sl, k:k + n - i] = cols[sl, i:i + 1]
                    k += n - i
            return cols

        t1, phi = _tabulate_family(fam, tg, chunk=_i5_chunk(G, n))
        F, err = _invert_family(_tab_family(t1, phi, P5), [P5] * phi.shape[1], tr.quad)
        index = np.empty((n, n), dtype=int)
        for k, (i, j) in enumerate(pairs):
            index[i, j] = n + k
        for i in range(n):
            index[i, :i] = index[i, i]
        out.update(bank=CurveBank(_X_GRID, F), grid=np.log(U), c=G.c / G.beta, index=index, inv_err=err)
    if len(_H_CACHE) > 16:
        _H_CACHE.clear()
    _H_CACHE[key] = out
    return out


def _lin_weights(grid, v):
    """Bracketing index and weight for linear interpolation in ``grid`` (clamped)."""
    with np.errstate(divide="ignore"):
        lv = np.log(np.maximum(v, 1e-300))
    i = np.clip(np.searchsorted(grid, lv) - 1, 0, grid.size - 2)
    w = np.clip((lv - grid[i]) / (grid[i + 1] - grid[i]), 0.0, 1.0)
    return i, w


def _endc_F(tab, x, r4sq, r5sq, coloc):
    """Interpolated ``F_I5(x | geometry)`` for arrays of samples."""
    bank, grid = tab["bank"], tab["grid"]
    if tab["model"] == "ppp":
        i, w = _lin_weights(grid, tab["c"] * r5sq)
        return (1.0 - w) * bank(i, x) + w * bank(i + 1, x)
    u4, u5 = tab["c"] * r4sq, tab["c"] * r5sq
    i, wi = _lin_weights(grid, u4)
    Fc = (1.0 - wi) * bank(i, x) + wi * bank(i + 1, x)
    j, wj = _lin_weights(grid, u5)
    idx = tab["index"]
    Fn = ((1 - wi) * (1 - wj) * bank(idx[i, j], x) + wi * (1 - wj) * bank(idx[i + 1, j], x)
          + (1 - wi) * wj * bank(idx[i, j + 1], x) + wi * wj * bank(idx[i + 1, j + 1], x))
    return np.where(coloc, Fc, Fn)


def _endc_geometry(scenario: ScenarioSpec, n, batch=2000):
    """Conditional-MC draws: 4G link powers, 5G serving power and geometry."""
    pr = scenario.params
    children = np.random.SeedSequence(scenario.seed).spawn(-(-n // batch))
    parts = []
    for b, child in enumerate(children):
        rng = np.random.default_rng(child)
        size = min(batch, n - b * batch)
        sq, kept = sample_radial_batch(scenario.model, pr.lambda4, scenario.window, size, rng, beta=pr.beta4)
        while not kept.any(axis=1).all():
            # re-draw the whole batch; empty windows are vanishingly rare
            sq, kept = sample_radial_batch(scenario.model, pr.lambda4, scenario.window, size, rng, beta=pr.beta4)
        rows = np.arange(size)
        coloc = rng.uniform(size=sq.shape) < pr.p
        h4 = rng.exponential(size=sq.shape)
        h5 = rng.exponential(size=size)
        smp = exposure_from_arrays(sq, kept, "4g", pr, h4)
        k4 = np.argmax(kept, axis=1)
        member5 = kept & coloc
        k5 = np.argmax(member5, axis=1)
        has5 = member5[rows, k5]
        r5sq = np.where(has5, sq[rows, k5], np.inf)
        s5 = np.where(has5, pr.P5_eff * h5 * path_loss(r5sq, pr.alpha, pr.D), 0.0)
        parts.append((smp.S4, smp.I4, s5, sq[rows, k4], r5sq, has5 & (k5 == k4), has5))
    return [np.concatenate(col) for col in zip(*parts)]


def rebt_cdf_endc(y_grid, scenario: ScenarioSpec, se_tol: Optional[float] = None) -> DistributionCurve:
    """CDF of REBT-DL under EN-DC by conditional Monte Carlo.

    ``REBT <= y`` iff ``g(i4; s4) + g(I5; s5) <= 0``, i.e. ``I5 <= I5*``.
    The 4G serving geometry, co-location marks, fading and the 4G
    interference are simulated; the 5G interference enters through its
    analytic conditional CDF at the root ``I5*``, given the two serving
    distances and the mode.  ``truncation.mc_integration_n`` draws are
    used, seeded from ``scenario.seed``.

    Raises:
        BudgetExceededError: if ``se_tol`` is given and the largest
            standard error exceeds it.
    """
    if scenario.rat != "endc":
        raise ValueError("rebt_cdf_endc needs an endc scenario")
    y = np.atleast_1d(np.asarray(y_grid, dtype=float))
    if np.any(y <= 0):
        raise ValueError("y grid must be positive")
    pr = scenario.params
    n = scenario.truncation.mc_integration_n
    s4, i4, s5, r4sq, r5sq, coloc, has5 = _endc_geometry(scenario, n)
    need_tab = pr.p > 0 and pr.eta > 0
    tab = _endc_tables(scenario) if need_tab else None
    means = np.empty(y.size)
    ses = np.empty(y.size)
    s5_safe = np.where(has5, s5, 1.0)
    for k, yk in enumerate(y):
        with np.errstate(divide="ignore", invalid="ignore"):
            off = g_function(i4, s4, yk, pr.W4)
        off = np.where(i4 > 0, off, -np.inf)  # no 4G interference: infinite 4G rate
        F = (off <= 0).astype(float)
        fin = has5 & np.isfinite(off)
        if fin.any():
            Ist = solve_g_root(s5_safe[fin], yk, pr.W5, off[fin])
            if need_tab:
                F[fin] = _endc_F(tab, Ist, r4sq[fin], r5sq[fin], coloc[fin])
            else:
                F[fin] = 1.0  # I5 = 0 almost surely and g5 -> -inf as I5 -> 0
        means[k] = F.mean()
        ses[k] = F.std(ddof=1) / math.sqrt(n) if n > 1 else math.inf
    vals, meta = monotone_cdf(means)
    meta.update(
        std_error=ses.tolist(),
        max_std_error=float(ses.max()),
        n_samples=n,
        n_without_5g=int(np.count_nonzero(~has5)),
        colocated_fraction=float(np.mean(coloc)),
        inversion_error=tab["inv_err"] if tab else 0.0,
        seed=scenario.seed,
        model=scenario.model,
        rat="endc",
    )
    if se_tol is not None and meta["max_std_error"] > se_tol:
        raise BudgetExceededError(
            f"standard error {meta['max_std_error']:.3g} exceeds {se_tol:.3g} with {n} samples")
    return DistributionCurve(y, vals, "cdf", "analytic", meta)
