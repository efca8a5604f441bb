"""Base-station point patterns: PPP and beta-Ginibre samplers, marks, serving laws.

Two beta-GPP samplers are provided.  :func:`sample_bgpp` draws the squared
moduli of the points (independent thinned Gamma variables, angles uniform);
this reproduces the law of every functional of the distances to the window
centre, which is all the exposure model needs.  :func:`sample_bgpp_dpp`
draws the full determinantal pattern, with the interpoint repulsion that
spatial summary statistics such as the J-function see.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special
from scipy.linalg.blas import zgeru as _zgeru

from .specfun import reg_gamma_upper

__all__ = [
    "NetworkParams",
    "Window",
    "MarkedPattern",
    "bgpp_kmax",
    "sample_ppp",
    "sample_bgpp",
    "sample_bgpp_dpp",
    "sample_radial_batch",
    "attach_marks",
    "serving_pdf",
    "ServingDensity",
]


@dataclass(frozen=True)
class NetworkParams:
    """Scalar network description in linear SI units.

    Powers are effective (EIRP) transmit powers in watts, bandwidths in Hz,
    intensities in points per square metre.
    """

    lambda4: float = 7.5294e-6
    lambda5: float = 5.1244e-6
    beta4: float = 0.75
    beta5: float = 0.83
    P4_eff: float = 10 ** ((45 - 30) / 10)
    P5_eff: float = 10 ** ((51 - 30) / 10)
    W4: float = 20e6
    W5: float = 90e6
    D: float = 40.0
    alpha: float = 4.0
    eta: float = 0.0469
    p: float = 0.7

    def __post_init__(self):
        for name in ("lambda4", "lambda5", "P4_eff", "P5_eff", "W4", "W5"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("beta4", "beta5"):
            if not 0 < getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")
        if not self.alpha > 2:
            raise ValueError("alpha must exceed 2")
        if not 0 <= self.p <= 1:
            raise ValueError("p must lie in [0, 1]")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if not self.D >= 0:
            raise ValueError("D must be nonnegative")

    @property
    def c4(self) -> float:
        return math.pi * self.lambda4

    @property
    def c5(self) -> float:
        return math.pi * self.lambda5

    def replace(self, **changes) -> "NetworkParams":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class Window:
    """Disk observation window."""

    radius: float = 4500.0
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("window radius must be positive")

    @property
    def area(self) -> float:
        return math.pi * self.radius**2


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MarkedPattern:
    """A realised pattern seen from the window centre (the typical user).

    Points are sorted by squared distance to the centre.  ``serving_index``
    is the nearest kept point, or -1 when no point is kept.
    """

    points: np.ndarray
    sq_dist: np.ndarray
    kept: np.ndarray
    colocated: Optional[np.ndarray] = None
    aligned: Optional[np.ndarray] = None
    serving_index: int = field(default=-1)

    @classmethod
    def from_points(cls, points, center=(0.0, 0.0), kept=None):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        d2 = np.sum((pts - np.asarray(center, dtype=float)) ** 2, axis=1)
        order = np.argsort(d2, kind="stable")
        pts, d2 = pts[order], d2[order]
        kept = np.ones(d2.size, bool) if kept is None else np.asarray(kept, bool)[order]
        return cls._build(pts, d2, kept)

    @classmethod
    def _build(cls, pts, d2, kept, colocated=None, aligned=None):
        idx = np.flatnonzero(kept)
        serving = int(idx[0]) if idx.size else -1
        return cls(
            points=_frozen(pts),
            sq_dist=_frozen(d2),
            kept=_frozen(kept),
            colocated=None if colocated is None else _frozen(colocated),
            aligned=None if aligned is None else _frozen(aligned),
            serving_index=serving,
        )

    def __len__(self):
        return self.sq_dist.size

    @property
    def n_kept(self) -> int:
        return int(np.count_nonzero(self.kept))

    def kept_points(self) -> np.ndarray:
        return self.points[self.kept]


def bgpp_kmax(c: float, beta: float, radius: float) -> int:
    """Index cutoff for the radial beta-GPP construction inside a disk."""
    m = c * radius**2 / beta
    return int(math.ceil(m + 10.0 * math.sqrt(m))) + 20


def _polar_points(sq, rng, center):
    ang = rng.uniform(0.0, 2.0 * math.pi, size=sq.size)
    r = np.sqrt(sq)
    return np.column_stack([center[0] + r * np.cos(ang), center[1] + r * np.sin(ang)])


def sample_ppp(lam: float, window: Window, rng: np.random.Generator) -> MarkedPattern:
    """Homogeneous Poisson pattern in the disk."""
    if not lam > 0:
        raise ValueError("intensity must be positive")
    n = rng.poisson(lam * window.area)
    sq = np.sort(window.radius**2 * rng.uniform(size=n))
    pts = _polar_points(sq, rng, window.center)
    return MarkedPattern._build(pts, sq, np.ones(n, bool))


def sample_bgpp(beta: float, lam: float, window: Window, rng: np.random.Generator,
                k_max: Optional[int] = None) -> MarkedPattern:
    """Radial beta-GPP construction.

    Squared distances ``Q_k ~ Gamma(k, scale=beta/c)`` for ``k = 1..k_max``,
    each kept with probability ``beta``; candidates outside the window are
    dropped.  Removed candidates stay in the pattern with ``kept=False``.
    """
    if not beta > 0:
        raise ValueError("degenerate beta: must be positive")
    if beta > 1:
        raise ValueError("beta must be at most 1")
    c = math.pi * lam
    k_max = k_max or bgpp_kmax(c, beta, window.radius)
    k = np.arange(1, k_max + 1)
    q = rng.gamma(k, beta / c)
    keep = rng.uniform(size=k_max) < beta
    inside = q < window.radius**2
    q, keep = q[inside], keep[inside]
    order = np.argsort(q, kind="stable")
    q, keep = q[order], keep[order]
    pts = _polar_points(q, rng, window.center)
    return MarkedPattern._build(pts, q, keep)


def sample_bgpp_dpp(beta: float, lam: float, window: Window, rng: np.random.Generator) -> MarkedPattern:
    """Exact beta-GPP restricted to the disk (spectral DPP algorithm).

    The restriction of the beta-Ginibre kernel to a centred disk is
    diagonal in the monomial basis, with eigenvalues
    ``beta * P(k + 1, c R^2 / beta)``.  Indices are selected by independent
    Bernoulli draws and the resulting projection DPP is sampled with the
    chain rule, using rejection from the intensity and a Householder-updated
    basis of the orthogonal complement.
    """
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    c = math.pi * lam
    cp = c / beta
    big_r2 = cp * window.radius**2  # squared radius in scaled units
    kmax = bgpp_kmax(c, beta, window.radius)
    k = np.arange(kmax)
    eig = beta * special.gammainc(k + 1, big_r2)
    sel = k[rng.uniform(size=kmax) < eig]
    n = sel.size
    if n == 0:
        return MarkedPattern._build(np.zeros((0, 2)), np.zeros(0), np.zeros(0, bool))
    log_norm = -0.5 * (special.gammaln(sel + 1) + np.log(special.gammainc(sel + 1, big_r2)))

    # rows of ``basis`` are conjugated orthonormal vectors spanning the
    # complement of the points drawn so far
    basis = np.eye(n, dtype=complex)
    out = np.empty(n, dtype=complex)
    for i in range(n):
        m = n - i
        while True:
            batch = int(math.ceil(1.3 * n / m)) + 1
            kk = sel[rng.integers(0, n, size=batch)]
            s2 = special.gammaincinv(kk + 1, rng.uniform(size=batch) * special.gammainc(kk + 1, big_r2))
            th = rng.uniform(0.0, 2.0 * math.pi, size=batch)
            logs = np.log(np.maximum(s2, 1e-300))
            logmag = 0.5 * np.outer(logs, sel) - 0.5 * s2[:, None] + log_norm[None, :]
            logmag -= logmag.max(axis=1, keepdims=True)
            vec = np.exp(logmag + 1j * np.outer(th, sel))
            vec /= np.linalg.norm(vec, axis=1, keepdims=True)
            proj = basis @ vec.T  # (m, batch)
            ratio = np.einsum("ij,ij->j", proj.real, proj.real) + np.einsum("ij,ij->j", proj.imag, proj.imag)
            acc = np.flatnonzero(rng.uniform(size=batch) < ratio)
            if acc.size:
                j = acc[0]
                break
        out[i] = math.sqrt(s2[j]) * np.exp(1j * th[j])
        if m > 1:
            v = proj[:, j]
            nv = np.linalg.norm(v)
            a0 = abs(v[0])
            phase = v[0] / a0 if a0 > 1e-150 else 1.0
            u = v.copy()
            u[0] += phase * nv
            u /= np.linalg.norm(u)
            w = u.conj() @ basis
            upd = _zgeru(-2.0, w, u, a=basis.T, overwrite_a=1)
            if not np.shares_memory(upd, basis):
                basis = upd.T
            basis = basis[1:]
    z = out / math.sqrt(cp)
    pts = np.column_stack([window.center[0] + z.real, window.center[1] + z.imag])
    return MarkedPattern.from_points(pts, center=window.center)


def attach_marks(pattern: MarkedPattern, p: float, eta: float, rng: np.random.Generator) -> MarkedPattern:
    """Co-location (Bernoulli(p)) and beam-alignment (Bernoulli(eta)) marks.

    The serving point is always aligned.
    """
    if pattern.colocated is not None or pattern.aligned is not None:
        raise ValueError("pattern already carries marks")
    n = len(pattern)
    coloc = rng.uniform(size=n) < p
    aligned = rng.uniform(size=n) < eta
    if pattern.serving_index >= 0:
        aligned[pattern.serving_index] = True
    return MarkedPattern._build(
        np.asarray(pattern.points), np.asarray(pattern.sq_dist), np.asarray(pattern.kept),
        colocated=coloc, aligned=aligned,
    )


# ---------------------------------------------------------------------------
# Serving-distance laws
# ---------------------------------------------------------------------------

class InsufficientTruncationError(ArithmeticError):
    """A truncated series or product left more mass behind than allowed."""


@dataclass(frozen=True)
class ServingDensity:
    """Density of the serving variable (distance ``r`` for PPP, ``u`` for beta-GPP)."""

    model: str
    variable: str
    pdf: object
    lam: float
    beta: float = 1.0
    k_max: int = 0

    def __call__(self, x):
        return self.pdf(np.asarray(x, dtype=float))


def bgpp_serving_density(u, beta, k_max):
    """Upsilon(u) = beta sum_s f_s(u) prod_{k != s} (1 - beta + beta Q_k(u))."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    k = np.arange(1, k_max + 1)[:, None]
    q = reg_gamma_upper(k, u[None, :])
    fac = 1.0 - beta + beta * q
    logf = np.log(fac)
    logprod = logf.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        logfs = (k - 1) * np.log(u[None, :]) - u[None, :] - special.gammaln(k)
    logfs = np.where(np.isfinite(logfs), logfs, np.where(k == 1, -u[None, :], -np.inf))
    terms = np.exp(logfs + logprod[None, :] - logf)
    return beta * terms.sum(axis=0)


def serving_pdf(model: str, lam: float, beta: float = 1.0, k_max: Optional[int] = None,
                check: bool = True) -> ServingDensity:
    """Density of the nearest-kept-point variable.

    PPP: ``f_R(r) = 2 pi lam r exp(-pi lam r^2)`` over distance.  beta-GPP:
    ``Upsilon(u)`` over ``u = c r^2 / beta`` with products truncated at
    ``k_max``.  With ``check`` the density is integrated numerically and a
    mass deficit above 1e-3 raises :class:`InsufficientTruncationError`.
    """
    if model == "ppp":
        def pdf(r):
            return 2 * math.pi * lam * r * np.exp(-math.pi * lam * r**2)

        return ServingDensity("ppp", "r", pdf, lam)
    if model != "bgpp":
        raise ValueError(f"unknown model {model!r}")
    if k_max is None:
        k_max = default_kmax(beta)
    dens = ServingDensity("bgpp", "u", lambda u: bgpp_serving_density(u, beta, k_max), lam, beta, k_max)
    if check:
        x, w = np.polynomial.legendre.leggauss(64)
        edges = np.concatenate([[0.0], np.geomspace(1e-3, 60.0 / beta, 40)])
        mass = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            nodes = 0.5 * (b - a) * x + 0.5 * (a + b)
            mass += 0.5 * (b - a) * np.dot(w, dens(nodes))
        if abs(mass - 1.0) > 1e-3:
            raise InsufficientTruncationError(f"serving density mass {mass:.6f} with k_max={k_max}")
    return dens


def default_kmax(beta: float) -> int:
    """Product cutoff: index scale of a disk of radius 10/sqrt(pi lambda)."""
    m = 100.0 / beta
    return int(math.ceil(m + 10.0 * math.sqrt(m))) + 20


def sample_radial_batch(model: str, lam: float, window: Window, size: int, rng: np.random.Generator,
                        beta: float = 1.0, k_max: Optional[int] = None):
    """Squared distances of ``size`` independent patterns as padded arrays.

    Only the distances to the window centre are drawn (enough for every
    exposure functional).  Returns ``(sq, kept)`` of shape ``(size, N)``; rows
    are sorted ascending and padding has ``sq = inf`` and ``kept = False``.
    """
    R2 = window.radius**2
    if model == "ppp":
        n = rng.poisson(lam * window.area, size=size)
        width = max(int(n.max()), 1)
        sq = R2 * rng.uniform(size=(size, width))
        valid = np.arange(width)[None, :] < n[:, None]
        sq = np.where(valid, sq, np.inf)
        sq.sort(axis=1)
        return sq, np.isfinite(sq)
    if model != "bgpp":
        raise ValueError(f"unknown model {model!r}")
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    c = math.pi * lam
    k_max = k_max or bgpp_kmax(c, beta, window.radius)
    k = np.arange(1, k_max + 1)
    q = rng.gamma(np.broadcast_to(k, (size, k_max)), beta / c)
    keep = rng.uniform(size=(size, k_max)) < beta
    q = np.where(q < R2, q, np.inf)
    order = np.argsort(q, axis=1, kind="stable")
    q = np.take_along_axis(q, order, axis=1)
    keep = np.take_along_axis(keep, order, axis=1) & np.isfinite(q)
    width = max(int(np.isfinite(q).sum(axis=1).max()), 1)
    return q[:, :width], keep[:, :width]
