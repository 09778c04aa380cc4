"""Independence testing with learned representations.

Kernel (HSIC) and neural-critic (NDS, InfoNCE, NWJ) statistics, power-driven
training objectives, exactly valid permutation tests and a power-study
harness, all on top of numpy and scipy.
"""

from .datasets import PairedSample, load_paired_csv, sample_hdgm, sample_sinusoid, shuffle_to_null
from .errors import (
    ConfigError,
    DataError,
    DomainError,
    IndepTestError,
    NumericError,
    SchemaError,
    ShapeError,
    TrainingDivergenceError,
)
from .estimators import hsic_biased, hsic_unbiased, hsic_variance, infonce, mmd2_biased_perm, nds_stat, nwj
from .kernels import DeepKernel, GaussianKernel, GramPair, gram_pair, median_heuristic_kernel
from .methods import METHODS, get_method
from .numkit import make_rng
from .objectives import ObjectiveConfig, Variant, gamma_threshold, j_hsic, j_nds
from .testing import RunConfig, SplitSpec, TestResult, TrainConfig, permutation_test, run_split_train_test, split_data

__version__ = "0.1.0"

__all__ = [
    "PairedSample",
    "load_paired_csv",
    "sample_hdgm",
    "sample_sinusoid",
    "shuffle_to_null",
    "ConfigError",
    "DataError",
    "DomainError",
    "IndepTestError",
    "NumericError",
    "SchemaError",
    "ShapeError",
    "TrainingDivergenceError",
    "hsic_biased",
    "hsic_unbiased",
    "hsic_variance",
    "infonce",
    "mmd2_biased_perm",
    "nds_stat",
    "nwj",
    "DeepKernel",
    "GaussianKernel",
    "GramPair",
    "gram_pair",
    "median_heuristic_kernel",
    "METHODS",
    "get_method",
    "make_rng",
    "ObjectiveConfig",
    "Variant",
    "gamma_threshold",
    "j_hsic",
    "j_nds",
    "RunConfig",
    "SplitSpec",
    "TestResult",
    "TrainConfig",
    "permutation_test",
    "run_split_train_test",
    "split_data",
]
