"""Quadrature plumbing shared by the analytic engine.

``PanelRule`` is a composite Gauss-Legendre rule that also returns tail
integrals ``int_x^inf g(v) dv`` at its own nodes or at arbitrary points, which
is what the beta-GPP products need.  The ``far_*`` helpers give the
closed-form radial integrals ``int_r^inf (1 - m) rho drho`` of the PPP
Laplace functionals.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import legendre
from scipy import special

from .specfun import hyp2f1_omega


def _local_tail_matrix(x):
    """L[i, j] = int_{x_i}^{1} l_j(s) ds for the Lagrange basis on nodes x."""
    n = x.size
    V = legendre.legvander(x, n - 1)
    C = np.linalg.inv(V)  # l_j(s) = sum_n C[n, j] P_n(s)
    return _tail_basis(x, n) @ C


def _tail_basis(pts, n):
    """T[i, k] = int_{pts_i}^1 P_k(s) ds."""
    pts = np.asarray(pts, dtype=float)
    P = legendre.legvander(pts, n)  # columns P_0..P_n
    T = np.empty((pts.size, n))
    T[:, 0] = 1.0 - pts
    for k in range(1, n):
        T[:, k] = -(P[:, k + 1] - P[:, k - 1]) / (2 * k + 1)
    return T


class PanelRule:
    """Composite Gauss-Legendre rule in ``s`` for integrals over ``v = s**power``.

    Args:
        edges: increasing panel edges in ``s``.
        order: nodes per panel.
        power: map exponent; ``v = s**power`` (2 gives panels uniform in
            distance for a squared-distance variable).
    """

    def __init__(self, edges, order=8, power=1.0):
        edges = np.asarray(edges, dtype=float)
        x, w = legendre.leggauss(order)
        a, b = edges[:-1], edges[1:]
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        s = mid[:, None] + half[:, None] * x[None, :]
        self.order = order
        self.power = power
        self.edges = edges
        self.half = half
        self.x_ref = x
        self.s = s.ravel()
        self.nodes = self.s**power
        jac = power * self.s ** (power - 1.0) if power != 1 else np.ones_like(self.s)
        self.jac = jac
        self.weights = (half[:, None] * w[None, :]).ravel() * jac
        self._w_ref = w
        self._L = _local_tail_matrix(x)
        self.n_panels = half.size

    @property
    def upper(self):
        return float(self.edges[-1] ** self.power)

    def integrate(self, G):
        return G @ self.weights

    def _panels(self, G):
        Gj = G * self.jac
        shp = G.shape[:-1]
        Gp = Gj.reshape(shp + (self.n_panels, self.order))
        full = np.einsum("...pn,n->...p", Gp, self._w_ref) * self.half
        # tail[p] = sum of full panels strictly after p
        rev = np.cumsum(full[..., ::-1], axis=-1)[..., ::-1]
        after = np.concatenate([rev[..., 1:], np.zeros(shp + (1,), dtype=rev.dtype)], axis=-1)
        return Gp, after

    def tail(self, G):
        """``int_{v_i}^{upper} g`` at every node; ``G`` has nodes on the last axis."""
        Gp, after = self._panels(G)
        local = np.einsum("...pn,in->...pi", Gp, self._L) * self.half[:, None]
        return (local + after[..., None]).reshape(G.shape)

    def tail_matrix(self, v_pts):
        """Matrix ``M`` with ``(G @ M.T)[..., i] = int_{v_pts_i}^{upper} g``."""
        v_pts = np.atleast_1d(np.asarray(v_pts, dtype=float))
        s_pts = v_pts ** (1.0 / self.power)
        M = np.zeros((v_pts.size, self.s.size))
        p = np.clip(np.searchsorted(self.edges, s_pts, side="right") - 1, 0, self.n_panels - 1)
        mid = 0.5 * (self.edges[p] + self.edges[p + 1])
        xr = np.clip((s_pts - mid) / self.half[p], -1.0, 1.0)
        C = np.linalg.inv(legendre.legvander(self.x_ref, self.order - 1))
        Lx = _tail_basis(xr, self.order) @ C * self.half[p][:, None]
        for i in range(v_pts.size):
            lo = p[i] * self.order
            if s_pts[i] >= self.edges[-1]:
                continue
            M[i, lo:lo + self.order] = Lx[i] * self.jac[lo:lo + self.order]
            M[i, lo + self.order:] = self.weights[lo + self.order:]
        return M


def distance_edges(s_break, s_max, ratio=1.2, max_step=0.5, n_inner=2):
    """Panel edges split at ``s_break``, geometric above it, then uniform."""
    edges = list(np.linspace(0.0, s_break, n_inner + 1)) if s_break > 0 else [0.0]
    s = max(s_break, 1e-3)
    if s_break <= 0:
        edges.append(s)
    while s < s_max:
        step = min(max_step, s * (ratio - 1.0))
        s = s + step
        edges.append(s)
    return np.asarray(edges)


# ---------------------------------------------------------------------------
# PPP radial integrals
# ---------------------------------------------------------------------------

def far_integral(t, r, P, alpha, D):
    """``int_r^inf (1 - 1/(1 - j t P l(rho))) rho drho`` in closed form.

    Broadcasts ``t`` against ``r``.  Outside the guard radius this is
    ``-z r^2 Omega(z) / (alpha - 2)`` with ``z = j t P r^-alpha``.
    """
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    t, r = np.broadcast_arrays(t, r)
    rr = np.maximum(r, D)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = 1j * t * P * rr ** (-alpha)
    if D > 0:
        outer = -z * rr**2 * hyp2f1_omega(z, alpha) / (alpha - 2.0)
    else:
        # r -> 0 limit of the same expression when there is no guard zone
        delta = 2.0 / alpha
        zero = rr == 0
        outer = np.empty(t.shape, dtype=complex)
        zz = z[~zero]
        outer[~zero] = -zz * rr[~zero] ** 2 * hyp2f1_omega(zz, alpha) / (alpha - 2.0)
        outer[zero] = (-1j * t[zero] * P) ** delta * math.pi / (alpha * math.sin(math.pi * delta))
    if D > 0:
        jt = 1j * t * P
        inner = 0.5 * (D * D - np.minimum(r, D) ** 2) * (-jt / (1.0 - jt))
        outer = outer + inner
    return outer


def pair_coefficients(P4, P5, eta):
    """Weights with ``1 - m4 (1 - eta + eta m5) = c1 (1 - m4) + c2 (1 - m5)``."""
    kappa = P5 / P4
    c1 = (1.0 - eta) + eta / (1.0 - kappa)
    c2 = -eta * kappa / (1.0 - kappa)
    return c1, c2


def far_integral_pair(t, r, P4, P5, eta, alpha, D):
    """``int_r^inf (1 - m4 (1 - eta + eta m5)) rho drho`` (co-sited 4G + 5G)."""
    if abs(P5 / P4 - 1.0) > 1e-3:
        c1, c2 = pair_coefficients(P4, P5, eta)
        return c1 * far_integral(t, r, P4, alpha, D) + c2 * far_integral(t, r, P5, alpha, D)
    return _far_pair_numeric(t, r, P4, P5, eta, alpha, D)


def _far_pair_numeric(t, r, P4, P5, eta, alpha, D):
    # partial fractions are ill-conditioned for P4 ~ P5: integrate in log rho
    t, r = np.broadcast_arrays(np.asarray(t, float), np.asarray(r, float))
    x, w = legendre.leggauss(16)
    out = np.zeros(t.shape, dtype=complex)
    r0 = np.maximum(r, 1e-9)

    def g(rho):
        ell = np.where(rho < D, 1.0, rho ** (-alpha))
        m4 = 1.0 / (1.0 - 1j * t[..., None] * P4 * ell)
        m5 = 1.0 / (1.0 - 1j * t[..., None] * P5 * ell)
        return 1.0 - m4 * (1.0 - eta + eta * m5)

    if D > 0:
        jt4, jt5 = 1j * t * P4, 1j * t * P5
        inner = 1.0 - (1.0 - eta + eta / (1.0 - jt5)) / (1.0 - jt4)
        out += 0.5 * (D * D - np.minimum(r, D) ** 2) * inner
    lo = np.log(np.maximum(r0, D if D > 0 else r0))
    for k in range(40):
        a, b = lo + 0.75 * k, lo + 0.75 * (k + 1)
        s = 0.5 * (b - a)[..., None] * x + 0.5 * (a + b)[..., None]
        rho = np.exp(s)
        out += 0.5 * (b - a) * np.sum(w * g(rho) * rho**2, axis=-1)
    return out


# ---------------------------------------------------------------------------
# beta-GPP index tables
# ---------------------------------------------------------------------------

def gamma_pdf_table(k_max, v):
    """``f_k(v) = v^(k-1) e^-v / (k-1)!`` for k = 1..k_max (rows)."""
    k = np.arange(1, k_max + 1)[:, None]
    v = np.asarray(v, dtype=float)[None, :]
    with np.errstate(divide="ignore"):
        logf = (k - 1) * np.log(v) - v - special.gammaln(k)
    logf = np.where((k == 1) & (v == 0), 0.0, logf)
    return np.exp(logf)


def gamma_sf_table(k_max, v):
    k = np.arange(1, k_max + 1)[:, None]
    return special.gammaincc(k, np.asarray(v, dtype=float)[None, :])


def index_tail_mass(k_max, v):
    """``sum_{k > k_max} f_k(v) = P(k_max, v)`` (regularised lower gamma)."""
    return special.gammainc(k_max, np.asarray(v, dtype=float))


def exclusive_products(A):
    """``out[s] = prod_{k != s} A[k]`` along axis 0, without division."""
    n = A.shape[0]
    if n == 1:
        return np.ones_like(A)
    ones = np.ones((1,) + A.shape[1:], dtype=A.dtype)
    pre = np.concatenate([ones, np.cumprod(A[:-1], axis=0)], axis=0)
    suf = np.concatenate([np.cumprod(A[::-1][:-1], axis=0)[::-1], ones], axis=0)
    return pre * suf


def gauss_legendre_log_panels(a, b, n_panels, order=8):
    """Nodes and weights for ``int_a^b`` with panels uniform in ``log x``."""
    x, w = legendre.leggauss(order)
    e = np.linspace(math.log(a), math.log(b), n_panels + 1)
    lo, hi = e[:-1], e[1:]
    s = 0.5 * (hi - lo)[:, None] * x + 0.5 * (hi + lo)[:, None]
    ws = 0.5 * (hi - lo)[:, None] * w
    nodes = np.exp(s).ravel()
    return nodes, (ws.ravel() * nodes)
