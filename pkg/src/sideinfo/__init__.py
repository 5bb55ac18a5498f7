"""Source coding with side-information: one-shot and finite-blocklength
quantities, the matching codes, and exact checks of the coding bounds."""

__version__ = "0.1.0"

from .dist import JointPMF, MixtureSpec, bsc_source, conditional_entropy, dsbs, make_pmf
from .entropy import he_bruteforce, hhe, ohe, ohs_eps, the_bruteforce, the_fractional
from .codes import EpsilonProfile, build_flag_code, build_sw_code, sw_decode, sw_encode
from .oracle import optimal_common_code

__all__ = [
    "JointPMF", "MixtureSpec", "bsc_source", "conditional_entropy", "dsbs", "make_pmf",
    "he_bruteforce", "hhe", "ohe", "ohs_eps", "the_bruteforce", "the_fractional",
    "EpsilonProfile", "build_flag_code", "build_sw_code", "sw_decode", "sw_encode",
    "optimal_common_code",
]
