"""bandlab: a numerical laboratory for block-banded random matrices.

The package samples symmetric block-tridiagonal random matrices (N blocks of
size W), factorizes their resolvents through a Schur-complement pivot
recursion, and measures the quantities that localization theory predicts for
them: exponential decay of fractional resolvent moments, localization lengths
growing like W^2, inverse-power resolvent tails, and Lyapunov spectra of the
associated transfer matrices.  A small fluctuation toolkit (rank-one tilts of
the conditional block law, anti-concentration estimates, toy checks of the
underlying measure-perturbation argument) covers the probabilistic machinery.
"""

__version__ = "0.1.0"

from .band import BandEnsemble, BlockTridiagonal, assemble_dense, restrict, sample_hamiltonian
from .errors import (
    BandError,
    ConfigError,
    ContractError,
    DimensionError,
    FitError,
    SingularMatrixError,
)
from .estimators import (
    correlator_profile,
    eigenvector_correlator,
    fractional_moment_scan,
    localization_length_fit,
    lyapunov_spectrum,
    operator_norm_tail,
    wegner_tail,
)
from .fluctuation import (
    FluctuationContext,
    PerturbationStep,
    anti_concentration,
    mcmc_conditional_chain,
    toy_fluctuation_check,
)
from .harness import ExperimentConfig, law_from_name, parse_config, run
from .laws import gaussian, heavy_tail, load_tabulated, tabulated, verify_regularity
from .resolvent import ResolventChain, build_chain, verify_identities
from .streams import Stream

__all__ = [
    "BandEnsemble",
    "BandError",
    "BlockTridiagonal",
    "ConfigError",
    "ContractError",
    "DimensionError",
    "ExperimentConfig",
    "FitError",
    "FluctuationContext",
    "PerturbationStep",
    "ResolventChain",
    "SingularMatrixError",
    "Stream",
    "anti_concentration",
    "assemble_dense",
    "build_chain",
    "correlator_profile",
    "eigenvector_correlator",
    "fractional_moment_scan",
    "gaussian",
    "heavy_tail",
    "law_from_name",
    "load_tabulated",
    "localization_length_fit",
    "lyapunov_spectrum",
    "mcmc_conditional_chain",
    "operator_norm_tail",
    "parse_config",
    "restrict",
    "run",
    "sample_hamiltonian",
    "tabulated",
    "toy_fluctuation_check",
    "verify_identities",
    "verify_regularity",
    "wegner_tail",
]
