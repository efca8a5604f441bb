"""Real base-station data: ingestion, projection, J-function and beta fit.

The fit is a minimum-contrast estimate: the border-corrected empirical
J-function of the data is compared with the J-function of simulated
beta-GPP patterns at the same intensity (pooled over replicates and
smoothed across ``beta``), and ``beta`` minimises the integrated squared
difference.  Model curves are simulated in units where
the intensity is one (distances times ``sqrt(lambda)``), so they are cached
across patterns and the fit is invariant under a change of length unit.
"""

from __future__ import annotations

import csv
import importlib.resources
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .analytic import DistributionCurve
from .spatial import MarkedPattern, Window, sample_bgpp_dpp

__all__ = [
    "BsRecord",
    "DataFormatError",
    "InsufficientPointsError",
    "FlatObjectiveWarning",
    "FitResult",
    "read_bs_csv",
    "project",
    "window_filter",
    "estimate_J",
    "j_function_bgpp_exact",
    "model_J_bgpp",
    "model_J_smoothed",
    "fit_beta",
    "estimate_colocation",
    "lambda_hat",
    "bundled_synthetic_path",
    "R_EARTH",
    "PARIS_CENTER",
]

log = logging.getLogger(__name__)

R_EARTH = 6_371_000.0
PARIS_CENTER = (48.86, 2.33)
_TECH = {"4g": "fourG", "fourg": "fourG", "5g": "fiveG", "fiveg": "fiveG"}


def bundled_synthetic_path() -> str:
    """Path of the shipped synthetic 4G pattern (beta-GPP, beta = 0.75, seed 2026)."""
    return str(importlib.resources.files("emfsg") / "data" / "synthetic_bgpp_4g_beta075.csv")


class DataFormatError(ValueError):
    """Malformed base-station file; the message carries the line number."""


class InsufficientPointsError(ValueError):
    """Too few points for a stable J-function estimate."""


class FlatObjectiveWarning(UserWarning):
    """The contrast objective barely changes over the beta grid."""


@dataclass(frozen=True)
class BsRecord:
    id: str
    lat_deg: float
    lon_deg: float
    tech: str

    def __post_init__(self):
        if not (abs(self.lat_deg) <= 90.0 and abs(self.lon_deg) <= 180.0):
            raise ValueError(f"coordinates out of range for {self.id!r}: ({self.lat_deg}, {self.lon_deg})")
        tech = _TECH.get(str(self.tech).strip().lower())
        if tech is None:
            raise ValueError(f"unknown technology {self.tech!r} for {self.id!r}")
        object.__setattr__(self, "tech", tech)


def read_bs_csv(path) -> list:
    """Read ``id,lat_deg,lon_deg,tech`` rows (header required).

    Rows with out-of-range coordinates are skipped with a warning; any other
    malformed row raises :class:`DataFormatError` naming its line.
    """
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: line 1: empty file") from None
        cols = [h.strip() for h in header]
        need = ["id", "lat_deg", "lon_deg", "tech"]
        if any(c not in cols for c in need):
            raise DataFormatError(f"{path}: line 1: header must contain {','.join(need)}, got {','.join(cols)}")
        pos = [cols.index(c) for c in need]
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(cols):
                raise DataFormatError(f"{path}: line {line}: expected {len(cols)} fields, got {len(row)}")
            rid, lat, lon, tech = (row[i].strip() for i in pos)
            try:
                lat_f, lon_f = float(lat), float(lon)
            except ValueError:
                raise DataFormatError(f"{path}: line {line}: non-numeric coordinate") from None
            if _TECH.get(tech.lower()) is None:
                raise DataFormatError(f"{path}: line {line}: tech must be 4G or 5G, got {tech!r}")
            try:
                records.append(BsRecord(rid, lat_f, lon_f, tech))
            except ValueError as exc:
                warnings.warn(f"{path}: line {line}: record rejected ({exc})", stacklevel=2)
    return records


def project(records: Iterable, center_latlon=PARIS_CENTER) -> np.ndarray:
    """Local tangent-plane coordinates in metres: ``x = R cos(lat0) dlon``, ``y = R dlat``.

    ``records`` holds :class:`BsRecord` objects or ``(lat, lon)`` pairs.
    Out-of-range coordinates are dropped with a warning.
    """
    lat0, lon0 = (float(v) for v in center_latlon)
    if not (abs(lat0) <= 90.0 and abs(lon0) <= 180.0):
        raise ValueError("center out of range")
    pts = []
    for rec in records:
        lat, lon = (rec.lat_deg, rec.lon_deg) if isinstance(rec, BsRecord) else (float(rec[0]), float(rec[1]))
        if not (abs(lat) <= 90.0 and abs(lon) <= 180.0):
            warnings.warn(f"record at ({lat}, {lon}) rejected: coordinates out of range", stacklevel=2)
            continue
        dlon = (lon - lon0 + 180.0) % 360.0 - 180.0
        pts.append((R_EARTH * math.cos(math.radians(lat0)) * math.radians(dlon),
                    R_EARTH * math.radians(lat - lat0)))
    return np.asarray(pts, dtype=float).reshape(-1, 2)


def window_filter(points, center=(0.0, 0.0), R: float = 4500.0) -> MarkedPattern:
    """Points strictly inside the disk of radius ``R``.

    The returned pattern carries the window centre as its origin; its
    intensity estimate is ``len(pattern) / (pi R^2)`` (see :func:`lambda_hat`).
    """
    if not R > 0:
        raise ValueError("R must be positive")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    d2 = np.sum((pts - np.asarray(center, dtype=float)) ** 2, axis=1)
    inside = d2 < R * R
    if not inside.any():
        warnings.warn("no point inside the window", stacklevel=2)
    pat = MarkedPattern.from_points(pts[inside], center=center)
    log.info("window keeps %d of %d points, lambda_hat = %.4g per m^2", len(pat), len(pts), len(pat) / (math.pi * R * R))
    return pat


def lambda_hat(pattern: MarkedPattern, window: Window) -> float:
    return len(pattern) / window.area


# ---------------------------------------------------------------------------
# J-function
# ---------------------------------------------------------------------------


def _lattice(window: Window, spacing: float):
    R = window.radius
    g = np.arange(-R + 0.5 * spacing, R, spacing)
    xx, yy = np.meshgrid(g, g)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    d = np.hypot(pts[:, 0], pts[:, 1])
    keep = d < R
    return pts[keep] + np.asarray(window.center, float), R - d[keep]


def _reduced_sample_cdf(dist, border, r):
    """``#{d <= r, b > r} / #{b > r}`` for every ``r`` (NaN where nothing is eligible)."""
    order = np.argsort(dist)
    d, b = dist[order], border[order]
    out = np.full(r.size, np.nan)
    for i, ri in enumerate(r):
        elig = b > ri
        n = np.count_nonzero(elig)
        if n:
            out[i] = np.count_nonzero(elig & (d <= ri)) / n
    return out


def _j_parts(points, window: Window, r, spacing):
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    tree = cKDTree(pts)
    c = np.asarray(window.center, float)
    # nearest-neighbour distances and border distances of the data points
    dd, _ = tree.query(pts, k=2)
    b_pts = window.radius - np.hypot(*(pts - c).T)
    G = _reduced_sample_cdf(dd[:, 1], b_pts, r)
    lat, b_lat = _lattice(window, spacing)
    dl, _ = tree.query(lat, k=1)
    F = _reduced_sample_cdf(dl, b_lat, r)
    return F, G


def estimate_J(pattern, window: Window, r_grid, spacing: Optional[float] = None,
               min_points: int = 30, f_floor: float = 0.05) -> DistributionCurve:
    """Border-corrected ``J(r) = (1 - G(r)) / (1 - F(r))``.

    ``F`` uses a square lattice of test points (``spacing`` defaults to
    ``0.1 / sqrt(lambda_hat)``) and ``G`` the nearest-neighbour distances;
    both keep only locations farther than ``r`` from the window boundary.
    The curve stops before the first ``r`` with ``1 - F(r) <= f_floor``.

    Raises:
        InsufficientPointsError: with fewer than ``min_points`` points.
    """
    pts = pattern.points if isinstance(pattern, MarkedPattern) else np.asarray(pattern, float).reshape(-1, 2)
    n = len(pts)
    if n < min_points:
        raise InsufficientPointsError(f"J-function needs at least {min_points} points, got {n}")
    r = np.asarray(r_grid, dtype=float)
    if np.any(r < 0) or np.any(np.diff(r) <= 0):
        raise ValueError("r grid must be nonnegative and increasing")
    lam = n / window.area
    spacing = spacing or 0.1 / math.sqrt(lam)
    F, G = _j_parts(pts, window, r, spacing)
    ok = np.isfinite(F) & np.isfinite(G) & (1.0 - F > f_floor)
    stop = int(np.argmin(ok)) if not ok.all() else r.size
    if stop < r.size:
        log.info("J-function truncated at r = %.4g (1 - F = %.3g)", r[stop], 1.0 - F[stop] if np.isfinite(F[stop]) else float("nan"))
    J = (1.0 - G[:stop]) / (1.0 - F[:stop])
    meta = {"n_points": n, "lambda_hat": lam, "spacing": spacing, "truncated": stop < r.size,
            "r_stop": float(r[stop]) if stop < r.size else None,
            "F": F[:stop].tolist(), "G": G[:stop].tolist()}
    return DistributionCurve(r[:stop], J, "jfunction", "empirical", meta)


def j_function_bgpp_exact(beta, lam, r):
    """Closed-form J-function of the stationary beta-GPP.

    The squared moduli seen from the origin are independent thinned
    ``Gamma(k, 1)`` variables (scaled by ``beta / (pi lam)``); under the
    reduced Palm law the ``k = 1`` term is removed, so
    ``J(r) = 1 / (1 - beta + beta exp(-pi lam r^2 / beta))``.
    """
    r = np.asarray(r, dtype=float)
    return 1.0 / (1.0 - beta + beta * np.exp(-math.pi * lam * r**2 / beta))


_MODEL_CACHE: dict = {}
_S_CANON = np.round(np.arange(0, 101) * 0.02, 12)  # model radii at unit intensity


def _model_stats(beta, replicates, n_model, seed):
    """Pooled J and its standard error at unit intensity on ``_S_CANON``.

    The curve is ``(1 - mean G) / (1 - mean F)`` over the replicates.  The
    mean of per-replicate ratios is biased upward in a small window, where
    ``1 - F`` of single patterns gets close to zero; pooling avoids that.
    The standard error comes from the spread of the per-replicate ratios.
    """
    key = (round(float(beta), 9), replicates, n_model, seed)
    if key in _MODEL_CACHE:
        return _MODEL_CACHE[key]
    win = Window(math.sqrt(n_model / math.pi))
    ss = np.random.SeedSequence([seed, int(round(beta * 1e9))])
    Fs, Gs = [], []
    for child in ss.spawn(replicates):
        rng = np.random.default_rng(child)
        pat = sample_bgpp_dpp(beta, 1.0, win, rng)
        if len(pat) < 2:
            continue
        F, G = _j_parts(pat.points, win, _S_CANON, 0.1)
        Fs.append(F)
        Gs.append(G)
    F, G = np.asarray(Fs), np.asarray(Gs)
    with warnings.catch_warnings(), np.errstate(divide="ignore", invalid="ignore"):
        warnings.simplefilter("ignore", RuntimeWarning)
        one_f = 1.0 - np.nanmean(F, axis=0)
        mean = np.where(one_f > 0, (1.0 - np.nanmean(G, axis=0)) / one_f, np.nan)
        ratios = np.where(1.0 - F > 0, (1.0 - G) / (1.0 - F), np.nan)
        cnt = np.sum(np.isfinite(ratios), axis=0)
        se = np.nanstd(ratios, axis=0, ddof=1) / np.sqrt(np.maximum(cnt, 1))
    if len(_MODEL_CACHE) > 4096:
        _MODEL_CACHE.clear()
    _MODEL_CACHE[key] = (mean, se)
    return mean, se


def model_J_bgpp(beta, lam, r_grid, replicates: int = 100, seed: int = 0, n_model: int = 100) -> DistributionCurve:
    """Simulated J-function of the beta-GPP, with standard errors.

    Patterns are drawn exactly (determinantal sampler) at unit intensity,
    on a fixed grid of scaled radii (then interpolated), in a disk holding
    ``n_model`` points on average, using the same estimator as
    :func:`estimate_J`.  The J-function of a stationary process does not
    depend on the window, so the disk only trades bias for cost.
    """
    if replicates < 100:
        raise ValueError("model curves need at least 100 replicates")
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    s = _scaled_grid(r_grid, lam, n_model)
    m, e = _model_stats(beta, replicates, n_model, seed)
    mean, se = np.interp(s, _S_CANON, m), np.interp(s, _S_CANON, e)
    return DistributionCurve(np.asarray(r_grid, dtype=float), mean, "jfunction", "monte_carlo",
                             {"beta": beta, "lambda": lam, "replicates": replicates, "std_error": se.tolist()})


def _scaled_grid(r_grid, lam, n_model):
    s = np.asarray(r_grid, dtype=float) * math.sqrt(lam)
    if s.size and s[-1] > min(_S_CANON[-1], math.sqrt(n_model / math.pi)):
        raise ValueError("r grid exceeds the simulated range (2 / sqrt(lambda))")
    return s


_SURFACE_CACHE: dict = {}
_SURFACE_BETAS = np.round(np.arange(1, 21) * 0.05, 10)


class _ModelSurface:
    """Simulated J curves smoothed across beta.

    For every scaled radius, ``log J`` of the simulated curves at
    ``_SURFACE_BETAS`` is fitted by a polynomial in ``beta`` of degree
    ``degree``.  J is smooth in beta, while the simulation noise of curves
    at different beta is independent, so the fit removes most of that
    noise.  The surface can then be evaluated at any beta without further
    simulation.
    """

    def __init__(self, replicates, seed, n_model, degree=5):
        self.J = np.array([_model_stats(b, replicates, n_model, seed)[0] for b in _SURFACE_BETAS])
        self.coef = np.full((degree + 1, _S_CANON.size), np.nan)
        for j in range(_S_CANON.size):
            ok = np.isfinite(self.J[:, j]) & (self.J[:, j] > 0)
            if np.count_nonzero(ok) > degree + 2:
                self.coef[:, j] = np.polynomial.polynomial.polyfit(_SURFACE_BETAS[ok], np.log(self.J[ok, j]), degree)

    def __call__(self, beta):
        return np.exp(np.polynomial.polynomial.polyval(float(beta), self.coef))


def _model_surface(replicates, seed, n_model):
    key = (replicates, seed, n_model)
    if key not in _SURFACE_CACHE:
        _SURFACE_CACHE[key] = _ModelSurface(replicates, seed, n_model)
    return _SURFACE_CACHE[key]


def model_J_smoothed(beta, lam, r_grid, replicates: int = 100, seed: int = 0, n_model: int = 100) -> DistributionCurve:
    """Model J-function at ``beta`` from the beta-smoothed simulation surface."""
    if replicates < 100:
        raise ValueError("model curves need at least 100 replicates")
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    s = _scaled_grid(r_grid, lam, n_model)
    vals = np.interp(s, _S_CANON, _model_surface(replicates, seed, n_model)(beta))
    return DistributionCurve(np.asarray(r_grid, dtype=float), vals, "jfunction", "monte_carlo",
                             {"beta": beta, "lambda": lam, "replicates": replicates, "smoothed": True})


# ---------------------------------------------------------------------------
# Minimum-contrast fit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    beta_hat: float
    lambda_hat: float
    objective: float
    curve_emp: DistributionCurve
    curve_model: DistributionCurve
    beta_grid: np.ndarray = field(repr=False, default=None)
    objective_grid: np.ndarray = field(repr=False, default=None)
    n_points: int = 0

    def __post_init__(self):
        if not self.objective >= 0:
            raise ValueError("objective must be nonnegative")


def _contrast(emp: DistributionCurve, model: DistributionCurve):
    d = emp.values - model.values
    ok = np.isfinite(d)
    if np.count_nonzero(ok) < 2:
        return math.inf
    return float(np.trapezoid(d[ok] ** 2, emp.grid[ok]))


def fit_beta(pattern, window: Window = None, r_grid=None, beta_grid: Optional[Sequence[float]] = None,
             replicates: int = 100, seed: int = 0, refine: bool = True, n_model: int = 100,
             smooth: bool = True) -> FitResult:
    """Minimum-contrast estimate of beta from one pattern.

    Args:
        pattern: :class:`MarkedPattern` or ``(n, 2)`` points inside ``window``.
        window: observation disk (default radius 4500 m at the origin).
        r_grid: J-function radii; default 41 points up to ``1.2 / sqrt(lambda_hat)``.
        beta_grid: coarse grid, default 0.05, 0.10, ..., 1.00.
        refine: add a 0.01-step pass within 0.04 of the coarse minimum.
        smooth: compare with the beta-smoothed model surface (see
            :func:`model_J_smoothed`) instead of one simulation per beta.

    Warns:
        FlatObjectiveWarning: if the objective varies by less than 5% over
            the coarse grid.
    """
    window = window or Window()
    pts = pattern.points if isinstance(pattern, MarkedPattern) else np.asarray(pattern, float).reshape(-1, 2)
    lam = len(pts) / window.area
    if r_grid is None:
        r_grid = np.linspace(0.0, 1.2, 41) / math.sqrt(max(lam, 1e-300))
    emp = estimate_J(pts, window, r_grid)
    betas = np.round(np.arange(1, 21) * 0.05, 10) if beta_grid is None else np.asarray(beta_grid, float)

    model_fn = model_J_smoothed if smooth else model_J_bgpp

    def obj(b):
        return _contrast(emp, model_fn(b, lam, emp.grid, replicates, seed, n_model))

    vals = np.array([obj(b) for b in betas])
    finite = vals[np.isfinite(vals)]
    if finite.size and (finite.max() - finite.min()) < 0.05 * finite.max():
        warnings.warn("J contrast is nearly flat in beta; the estimate is weak", FlatObjectiveWarning, stacklevel=2)
    best = float(betas[int(np.argmin(vals))])
    all_b, all_v = list(betas), list(vals)
    if refine:
        fine = np.round(best + 0.01 * np.arange(-4, 5), 10)
        fine = fine[(fine > 0) & (fine <= 1.0) & ~np.isin(fine, betas)]
        for b in fine:
            all_b.append(float(b))
            all_v.append(obj(b))
    all_b, all_v = np.asarray(all_b), np.asarray(all_v)
    order = np.argsort(all_b)
    all_b, all_v = all_b[order], all_v[order]
    k = int(np.argmin(all_v))
    b_hat = float(all_b[k])
    model = model_fn(b_hat, lam, emp.grid, replicates, seed, n_model)
    return FitResult(b_hat, lam, float(all_v[k]), emp, model, all_b, all_v, len(pts))


def estimate_colocation(points4, points5, radius: float = 10.0) -> float:
    """Fraction of 4G sites with a 5G site within ``radius`` metres."""
    p4 = np.asarray(points4, float).reshape(-1, 2)
    p5 = np.asarray(points5, float).reshape(-1, 2)
    if len(p4) == 0:
        raise ValueError("no 4G sites")
    if len(p5) == 0:
        return 0.0
    d, _ = cKDTree(p5).query(p4, k=1)
    return float(np.mean(d <= radius))
