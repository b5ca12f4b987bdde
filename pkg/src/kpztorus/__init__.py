"""Numerical laboratory for the stochastic heat equation on a torus.

Lyapunov exponents, height-fluctuation statistics, winding-number
diffusivity, invariant measures of the projective process, and the explicit
corrector, each computable by at least two independent routes.
"""

from .noise import (
    BridgePath,
    CovarianceSpec,
    LatticeField,
    NoiseSlice,
    sample_bridge,
    sample_smooth_slice,
    sample_stationary_density,
    sample_white_slice,
)
from .rng import RngStream
from .she import CoveringKernel, GreensKernel, SolverParams, covering, greens, solve, step
from .projective import (
    DensityField,
    MartingaleLedger,
    forward_density,
    ledger,
    mixing_curve,
    normalize,
    overlap,
)
from .height import (
    HeightSample,
    RegimeScanConfig,
    clt_experiment,
    estimate_gamma,
    lil_diagnostic,
    regime_scan,
)
from .bridge_formulas import (
    Estimate,
    QuadratureSpec,
    corrector_chi,
    corrector_grad,
    ey_minus2_closed,
    gamma_expansion_smooth,
    gamma_white_bridge_mc,
    gamma_white_closed,
    sigma2_corrector_mc,
    sigma2_decay_fit,
    sigma2_nested_mc,
    sigma2_white_mc,
    winding_diffusivity_mc,
    yor_density,
    yor_moment,
)
from .winding import (
    QuenchedLaw,
    WindingChain,
    build_chain,
    quenched_moments,
    sample_displacement,
    sigma_empirical,
)
from .cli import ExperimentConfig, ResultRecord, parse_config, report, run

__version__ = "0.1.0"
