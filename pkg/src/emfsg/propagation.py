"""Link-level physics: path loss, fading, exposure, throughput and REBT.

Everything is in linear units (watts, metres, Hz).  The batched entry point
:func:`exposure_from_arrays` works on padded ``(B, N)`` arrays of squared
distances so that Monte Carlo runs avoid per-realisation Python overhead;
:func:`realize_exposure` is the single-pattern wrapper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spatial import MarkedPattern, NetworkParams

__all__ = [
    "dbm_to_w",
    "w_to_dbm",
    "path_loss",
    "RealizationSample",
    "exposure_from_arrays",
    "realize_exposure",
    "realize_rebt",
    "throughput",
    "g_function",
    "solve_g_root",
    "EmptyPatternError",
]

LN2 = math.log(2.0)


class EmptyPatternError(ValueError):
    """No kept base station in the pattern, so there is no serving link."""


def dbm_to_w(p_dbm):
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


def w_to_dbm(p_w):
    return 10.0 * np.log10(np.asarray(p_w, dtype=float)) + 30.0


def path_loss(r_sq, alpha: float, D: float, smooth: bool = False):
    """Bounded path loss: 1 inside the guard radius, ``r^-alpha`` outside.

    With ``smooth=True`` returns ``min(1, r^-alpha)`` instead, which removes
    the jump at ``r = D``.  The analytic engine assumes the default form.
    """
    r_sq = np.asarray(r_sq, dtype=float)
    with np.errstate(divide="ignore"):
        far = r_sq ** (-0.5 * alpha)
    if smooth:
        return np.minimum(1.0, far)
    return np.where(r_sq < D * D, 1.0, far)


@dataclass(frozen=True)
class RealizationSample:
    """Received powers for one or many realisations (scalars or arrays)."""

    S4: np.ndarray
    I4: np.ndarray
    S5: np.ndarray
    I5: np.ndarray
    has5: np.ndarray = None

    @property
    def exposure(self):
        return self.S4 + self.I4 + self.S5 + self.I5


def exposure_from_arrays(sq, kept, rat, params: NetworkParams, h4=None, h5=None,
                         colocated=None, aligned=None):
    """Signal and interference powers for a batch of padded patterns.

    Args:
        sq: ``(B, N)`` squared distances, each row sorted ascending; padding
            entries must have ``kept`` False.
        kept: ``(B, N)`` retention flags.
        rat: ``"4g"``, ``"5g"`` or ``"endc"``.  For ``"5g"`` the arrays
            describe the standalone 5G layer; for ``"endc"`` they describe the
            4G sites and 5G radios sit on the co-located ones.
        h4, h5: unit-mean exponential fading per site and RAT.
        colocated, aligned: boolean marks (``aligned`` is ignored on the
            serving 5G link, which always points at the user).

    Returns:
        RealizationSample with ``(B,)`` arrays.
    """
    sq = np.atleast_2d(sq)
    kept = np.atleast_2d(kept)
    B, N = sq.shape
    if N == 0 or not kept.any(axis=1).all():
        raise EmptyPatternError("every realisation needs at least one kept point")
    rows = np.arange(B)
    ell = path_loss(sq, params.alpha, params.D)
    zeros = np.zeros(B)

    def tier(P, h, member, gain):
        # serving = first member in distance order
        srv = np.argmax(member, axis=1)
        has = member[rows, srv]
        rx = P * h * ell
        s = np.where(has, rx[rows, srv], 0.0)
        mask = member & gain
        mask[rows, srv] = False
        i = np.where(mask, rx, 0.0).sum(axis=1)
        return s, np.where(has, i, 0.0), has

    ones = np.ones_like(kept)
    if rat == "4g":
        s4, i4, _ = tier(params.P4_eff, h4, kept, ones)
        return RealizationSample(s4, i4, zeros, zeros.copy(), np.zeros(B, bool))
    if rat == "5g":
        s5, i5, has = tier(params.P5_eff, h5, kept, np.atleast_2d(aligned))
        return RealizationSample(zeros, zeros.copy(), s5, i5, has)
    if rat == "endc":
        s4, i4, _ = tier(params.P4_eff, h4, kept, ones)
        member5 = kept & np.atleast_2d(colocated)
        s5, i5, has = tier(params.P5_eff, h5, member5, np.atleast_2d(aligned))
        return RealizationSample(s4, i4, s5, i5, has)
    raise ValueError(f"unknown rat {rat!r}")


def realize_exposure(patterns, params: NetworkParams, rng: np.random.Generator, rat: str = "endc",
                     ) -> RealizationSample:
    """One realisation of received powers for marked pattern(s).

    ``patterns`` is a :class:`MarkedPattern` (the 4G layer for ``"4g"`` and
    ``"endc"``, the 5G layer for ``"5g"``) or a dict with that pattern under
    key ``"4g"`` or ``"5g"``.  Fading is drawn from ``rng``: first the 4G
    powers for every point, then the 5G powers.
    """
    if isinstance(patterns, dict):
        pat = patterns["5g" if rat == "5g" else "4g"]
    else:
        pat = patterns
    if not isinstance(pat, MarkedPattern):
        raise TypeError("expected a MarkedPattern")
    if pat.n_kept == 0:
        raise EmptyPatternError("pattern has no kept point")
    n = len(pat)
    h4 = rng.exponential(size=n)
    h5 = rng.exponential(size=n)
    if rat in ("5g", "endc") and pat.aligned is None:
        raise ValueError("5G tiers need alignment marks (see attach_marks)")
    if rat == "endc" and pat.colocated is None:
        raise ValueError("EN-DC needs co-location marks")
    out = exposure_from_arrays(
        pat.sq_dist[None, :], pat.kept[None, :], rat, params, h4[None, :], h5[None, :],
        None if pat.colocated is None else pat.colocated[None, :],
        None if pat.aligned is None else pat.aligned[None, :],
    )
    return RealizationSample(*(np.asarray(getattr(out, f))[0] for f in ("S4", "I4", "S5", "I5", "has5")))


def _rate(W, s, i):
    s = np.asarray(s, dtype=float)
    i = np.asarray(i, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        sir = np.where(s > 0, s / i, 0.0)
    return W * np.log1p(sir) / LN2


def throughput(sample: RealizationSample, params: NetworkParams, rat: str):
    """Shannon sum rate over the active RATs (interference limited)."""
    if rat == "4g":
        return _rate(params.W4, sample.S4, sample.I4)
    if rat == "5g":
        return _rate(params.W5, sample.S5, sample.I5)
    return _rate(params.W4, sample.S4, sample.I4) + _rate(params.W5, sample.S5, sample.I5)


def realize_rebt(sample: RealizationSample, params: NetworkParams, rat: str = "endc"):
    """Exposure divided by throughput, in W/(bit/s).

    Returns ``(rebt, underflow)``; realisations whose throughput is zero get
    ``rebt = inf`` and ``underflow = True``.
    """
    thr = throughput(sample, params, rat)
    expo = sample.exposure
    under = ~(thr > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rebt = np.where(under, np.inf, expo / np.where(under, 1.0, thr))
    if np.ndim(rebt) == 0:
        return float(rebt), bool(under)
    return rebt, under


def g_function(I, s, y, W, offset=0.0):
    """``g(I; s) = s + I - y W log2(1 + s / I)`` plus an optional offset."""
    I = np.asarray(I, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        ratio = s / I
        lg = np.where(np.isfinite(ratio), np.log1p(ratio), np.log(s) - np.log(I))
    return s + I - y * W * lg / LN2 + offset


def _h(x, a, o):
    # h(x) = 1 + o + e^x - a log2(1 + e^-x), with q = I/s = e^x
    return 1.0 + o + np.exp(np.minimum(x, 700.0)) - a * np.logaddexp(0.0, -x) / LN2


def _dh(x, a):
    return np.exp(np.minimum(x, 700.0)) + (a / LN2) / (1.0 + np.exp(np.minimum(x, 700.0)))


def solve_g_root(s, y, W, offset=0.0, max_iter=200, return_log=False):
    """Unique root ``I*`` of ``g(I; s) + offset = 0``, vectorised.

    ``g`` is strictly increasing in ``I`` (from -inf at 0 to +inf), so the
    root exists and is unique for every ``s > 0``.  The equation is solved
    for ``x = log(I / s)`` by bracketed Newton iteration; by homogeneity it
    only depends on ``a = y W / s`` and ``o = offset / s``.  Roots below the
    smallest normal double come back as 0; ``return_log=True`` gives
    ``log I*`` instead, which is always finite.

    Raises:
        ValueError: if any ``s <= 0``, ``y <= 0`` or ``W <= 0``.
    """
    s, y, W, offset = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (s, y, W, offset)))
    if np.any(~(s > 0)):
        raise ValueError("s must be positive: g > 0 everywhere when s = 0")
    if np.any(~(y > 0)) or np.any(~(W > 0)):
        raise ValueError("y and W must be positive")
    scalar = s.ndim == 0
    shape = s.shape
    s, y, W, offset = (np.atleast_1d(v).astype(float).ravel() for v in (s, y, W, offset))
    a = y * W / s
    o = offset / s
    lo = np.full(a.shape, -1.0)
    hi = np.full(a.shape, 1.0)
    for b, sign in ((lo, 1.0), (hi, -1.0)):
        bad = np.flatnonzero(sign * _h(b, a, o) >= 0)
        for _ in range(60):
            if bad.size == 0:
                break
            b[bad] *= 2.0
            bad = bad[sign * _h(b[bad], a[bad], o[bad]) >= 0]
    hi = np.minimum(hi, 709.0)
    # initial guess: the better of the small-I (linear in x) and large-I
    # (quadratic in q = e^x) asymptotic roots
    b = 1.0 + o
    x_lin = -b * LN2 / a
    disc = np.sqrt(b * b + 4.0 * a / LN2)
    with np.errstate(divide="ignore"):
        q = np.where(b > 0, 2.0 * (a / LN2) / (b + disc), 0.5 * (disc - b))
        x_quad = np.log(q)
    x_lin, x_quad = np.clip(x_lin, lo, hi), np.clip(x_quad, lo, hi)
    x = np.where(np.abs(_h(x_lin, a, o)) < np.abs(_h(x_quad, a, o)), x_lin, x_quad)
    act = np.arange(x.size)
    for _ in range(max_iter):
        xa, la, ha, aa = x[act], lo[act], hi[act], a[act]
        hx = _h(xa, aa, o[act])
        la = np.where(hx < 0, xa, la)
        ha = np.where(hx > 0, xa, ha)
        step = hx / _dh(xa, aa)
        xn = xa - step
        scale = np.maximum(1.0, np.abs(xa))
        done = (np.abs(step) <= 1e-15 * scale) | (ha - la <= 4e-16 * scale) | (hx == 0)
        out = ~done & ((xn <= la) | (xn >= ha))
        xn = np.where(out, 0.5 * (la + ha), xn)
        x[act], lo[act], hi[act] = xn, la, ha
        act = act[~done]
        if act.size == 0:
            break
    if return_log:
        I = np.log(s) + x
    else:
        I = s * np.exp(x)
        I[I < np.finfo(float).tiny] = 0.0
    return float(I[0]) if scalar else I.reshape(shape)
