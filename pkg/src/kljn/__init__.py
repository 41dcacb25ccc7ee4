"""Ideal Kirchhoff-loop Johnson-noise key exchange: simulator and attack bench."""

from .eve import (
    AdvantageReport,
    CorrSignDistinguisher,
    DistinguisherOutcome,
    EnergyTestResult,
    RefMatchDistinguisher,
    TailQuadrantDistinguisher,
    corr_sign_statistic,
    energy_two_sample,
    estimate_advantage,
    make_distinguisher,
    ref_match_classify,
    tail_quadrant_statistic,
)
from .loop import (
    LoopState,
    ResistorPair,
    WireTrace,
    kljn_coefficients,
    lukacs_king_residual,
    mirror,
    simulate_state,
    theoretical_cov,
)
from .noise import (
    Gaussian,
    NoiseAssignment,
    SymmetricStable,
    Uniform,
    char_function,
    empirical_cf,
    explicit_assignment,
    johnson_scaling,
    sample_noise,
)

__version__ = "0.1.0"

__all__ = [
    "AdvantageReport",
    "CorrSignDistinguisher",
    "DistinguisherOutcome",
    "EnergyTestResult",
    "Gaussian",
    "LoopState",
    "NoiseAssignment",
    "RefMatchDistinguisher",
    "ResistorPair",
    "SymmetricStable",
    "TailQuadrantDistinguisher",
    "Uniform",
    "WireTrace",
    "char_function",
    "corr_sign_statistic",
    "empirical_cf",
    "energy_two_sample",
    "estimate_advantage",
    "explicit_assignment",
    "johnson_scaling",
    "kljn_coefficients",
    "lukacs_king_residual",
    "make_distinguisher",
    "mirror",
    "ref_match_classify",
    "sample_noise",
    "simulate_state",
    "tail_quadrant_statistic",
    "theoretical_cov",
]
