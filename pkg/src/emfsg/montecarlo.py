"""Monte Carlo harness for exposure and REBT-DL at the typical user.

Realisations are simulated in fixed-size batches.  Batch ``b`` draws from
its own generator spawned from ``SeedSequence(master_seed)``, so a run is
reproducible bit for bit and independent of how batches are later reduced.
Within a batch the draw order is fixed: pattern, co-location marks,
alignment marks, 4G fading, 5G fading.  Runs of different RATs that share
the 4G layer (``"4g"`` and ``"endc"``) are therefore coupled path by path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analytic import DistributionCurve, ScenarioSpec
from .propagation import RealizationSample, exposure_from_arrays, realize_rebt
from .spatial import MarkedPattern, Window, sample_radial_batch

__all__ = ["McRunSpec", "McResult", "run_exposure_mc", "run_rebt_mc", "ecdf", "ks_distance",
           "simulate_batches"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class McRunSpec:
    """A reproducible simulation request.

    ``fixed_pattern`` replaces the random point pattern by a given one (for
    example real base-station positions around a chosen user); marks and
    fading are still simulated.
    """

    scenario: ScenarioSpec
    n_realizations: int = 100_000
    master_seed: int = 0
    window: Window = field(default_factory=Window)
    batch_size: int = 2000
    fixed_pattern: Optional[MarkedPattern] = None

    def __post_init__(self):
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class McResult:
    sample: RealizationSample
    exposure: np.ndarray
    n_redrawn: int = 0
    n_without_5g: int = 0
    rebt: Optional[np.ndarray] = None
    n_infinite: int = 0

    def curve(self, grid, which="exposure") -> DistributionCurve:
        data = self.exposure if which == "exposure" else self.rebt[np.isfinite(self.rebt)]
        return ecdf(data, grid)


def _layer_of(spec: McRunSpec):
    sc = spec.scenario
    pr = sc.params
    if sc.rat == "5g":
        return pr.lambda5, pr.beta5
    return pr.lambda4, pr.beta4


def _draw_pattern(spec: McRunSpec, size, rng):
    if spec.fixed_pattern is not None:
        fp = spec.fixed_pattern
        sq = np.broadcast_to(np.asarray(fp.sq_dist, float), (size, len(fp))).copy()
        kept = np.broadcast_to(np.asarray(fp.kept, bool), (size, len(fp))).copy()
        return sq, kept
    lam, beta = _layer_of(spec)
    model = spec.scenario.model
    sq, kept = sample_radial_batch(model, lam, spec.window, size, rng, beta=beta)
    return sq, kept


def _pad(a, width, fill):
    if a.shape[1] >= width:
        return a
    pad = np.full((a.shape[0], width - a.shape[1]), fill, dtype=a.dtype)
    return np.concatenate([a, pad], axis=1)


def simulate_batches(spec: McRunSpec):
    """Yield ``(batch_index, sq, kept, colocated, aligned, h4, h5, n_redrawn)`` per batch."""
    n = spec.n_realizations
    nb = -(-n // spec.batch_size)
    children = np.random.SeedSequence(spec.master_seed).spawn(nb)
    pr = spec.scenario.params
    for b, child in enumerate(children):
        rng = np.random.default_rng(child)
        size = min(spec.batch_size, n - b * spec.batch_size)
        sq, kept = _draw_pattern(spec, size, rng)
        redrawn = 0
        empty = np.flatnonzero(~kept.any(axis=1))
        if empty.size and spec.fixed_pattern is not None:
            raise ValueError("fixed pattern has no kept point")
        for row in empty:
            while True:
                redrawn += 1
                s1, k1 = _draw_pattern(spec, 1, rng)
                if k1.any():
                    break
            width = max(sq.shape[1], s1.shape[1])
            sq, kept = _pad(sq, width, np.inf), _pad(kept, width, False)
            sq[row] = _pad(s1, width, np.inf)[0]
            kept[row] = _pad(k1, width, False)[0]
        shape = sq.shape
        coloc = rng.uniform(size=shape) < pr.p
        aligned = rng.uniform(size=shape) < pr.eta
        h4 = rng.exponential(size=shape)
        h5 = rng.exponential(size=shape)
        yield b, sq, kept, coloc, aligned, h4, h5, redrawn


def _run(spec: McRunSpec):
    parts = []
    redrawn = 0
    for _, sq, kept, coloc, aligned, h4, h5, rd in simulate_batches(spec):
        redrawn += rd
        parts.append(exposure_from_arrays(sq, kept, spec.scenario.rat, spec.scenario.params,
                                          h4, h5, coloc, aligned))
    sample = RealizationSample(*(np.concatenate([getattr(p, f) for p in parts])
                                 for f in ("S4", "I4", "S5", "I5", "has5")))
    no5 = int(np.count_nonzero(~sample.has5)) if spec.scenario.rat != "4g" else 0
    if redrawn:
        log.info("re-drew %d empty patterns", redrawn)
    if no5 and spec.scenario.rat == "endc":
        log.info("%d realisations had no co-located 5G site; their 5G terms are zero", no5)
    return sample, redrawn, no5


def run_exposure_mc(spec: McRunSpec) -> McResult:
    """Simulated exposures (watts) of ``spec.n_realizations`` typical users."""
    sample, redrawn, no5 = _run(spec)
    return McResult(sample, sample.exposure, redrawn, no5)


def run_rebt_mc(spec: McRunSpec) -> McResult:
    """Simulated REBT-DL values; infinite ones (zero throughput) are counted."""
    sample, redrawn, no5 = _run(spec)
    rebt, under = realize_rebt(sample, spec.scenario.params, spec.scenario.rat)
    n_inf = int(np.count_nonzero(under))
    if n_inf:
        log.warning("%d realisations with zero throughput excluded (fraction %.3g)", n_inf, n_inf / rebt.size)
    return McResult(sample, sample.exposure, redrawn, no5, rebt, n_inf)


def ecdf(samples, grid) -> DistributionCurve:
    """Empirical CDF ``#{x_i <= g} / n`` on a sorted grid."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    g = np.asarray(grid, dtype=float)
    if x.size == 0:
        raise ValueError("no samples")
    vals = np.searchsorted(x, g, side="right") / x.size
    return DistributionCurve(g, vals, "cdf", "monte_carlo", {"n": int(x.size)})


def _step_eval(curve: DistributionCurve, x):
    i = np.searchsorted(curve.grid, x, side="right") - 1
    return curve.values[np.clip(i, 0, curve.grid.size - 1)]


def ks_distance(a: DistributionCurve, b: DistributionCurve) -> float:
    """Sup-norm distance between two curves of the same kind.

    Both curves are resampled by right-continuous step interpolation onto
    the union of their grid points inside the overlap of the two ranges.
    """
    if a.kind != b.kind:
        raise ValueError(f"incompatible curve kinds {a.kind!r} and {b.kind!r}")
    lo = max(a.grid[0], b.grid[0])
    hi = min(a.grid[-1], b.grid[-1])
    if lo > hi:
        raise ValueError("curves have disjoint grids")
    g = np.union1d(a.grid, b.grid)
    g = g[(g >= lo) & (g <= hi)]
    return float(np.max(np.abs(_step_eval(a, g) - _step_eval(b, g))))
