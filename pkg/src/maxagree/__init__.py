"""Exact maximal agreement couplings of two finite-horizon processes."""

from .coupling import (
    BEYOND,
    DIRECT,
    PAPER,
    LayeredCoupling,
    agreement_profile,
    build,
    build_direct_meet,
    build_paper_recursive,
    conditional_marginal_check,
    regraft,
    sigma_distribution,
    verify_coupling,
    verify_maximality,
)
from .lawmodels import CoarseGrainMap, MarkovSpec, ProcessLaw, law_from_table, law_iid, law_markov, pushforward
from .measure import Alphabet, PathMeasure, tv_distance
from .tau import countable_bounds, extend_with_tau, kappa, kappa_profile, verify_tau

__all__ = [
    "BEYOND", "DIRECT", "PAPER", "Alphabet", "CoarseGrainMap", "LayeredCoupling", "MarkovSpec",
    "PathMeasure", "ProcessLaw", "agreement_profile", "build", "build_direct_meet",
    "build_paper_recursive", "conditional_marginal_check", "countable_bounds", "extend_with_tau",
    "kappa", "kappa_profile", "law_from_table", "law_iid", "law_markov", "pushforward", "regraft",
    "sigma_distribution", "tv_distance", "verify_coupling", "verify_maximality", "verify_tau",
]
