"""Downlink EMF exposure and REBT-DL in 4G/5G EN-DC networks.

Submodules:
    specfun: Gauss hypergeometric Omega, incomplete gamma and Gil-Pelaez inversion.
    spatial: parameters, windows, PPP and beta-Ginibre samplers, serving laws.
    propagation: path loss, exposure, throughput, REBT-DL and the g-root.
    analytic: characteristic functions and inverted CDFs of exposure and REBT-DL.
    montecarlo: seeded simulation harness, ECDFs and KS distances.
    fitting: base-station data ingestion, J-function and beta estimation.
    cli: the ``emfsg`` command.
"""

from .analytic import DistributionCurve, ScenarioSpec, TruncationSpec
from .spatial import NetworkParams, Window

__version__ = "0.1.0"

__all__ = ["DistributionCurve", "NetworkParams", "ScenarioSpec", "TruncationSpec", "Window", "__version__"]
