"""Concave jump penalties and piecewise constant minimisers of 1-D TV_K energies."""
from .diagnostics import (CheckResult, StructureReport, check_structure, check_tvk_lower,
                          coincidence_set, lebj_audit, monotone_gap_audit)
from .errors import CertificationError, DomainError, KwcError, RangeError, RefusalError, ValidationError
from .penalty import (JumpPenalty, PenaltyCertificate, PenaltyKind, Potential, build_from_potential,
                      certify, check_lower_gap, eval_penalty, subadditivity_gap, verify_potential)
from .rof import max_jump, solve_rof
from .signal import (EnergyBreakdown, Interp, PiecewiseConstantFn, Signal, canonicalize, fidelity,
                     total_energy, tv_k_energy)
from .solver_dp import LevelGrid, brute_force, refine_levels, solve_dp
from .solver_refine import JumpBudget, best_single_jump, jump_budget, refine

__all__ = [
    "CertificationError", "CheckResult", "DomainError", "EnergyBreakdown", "Interp", "JumpBudget",
    "JumpPenalty", "KwcError", "LevelGrid", "PenaltyCertificate", "PenaltyKind", "PiecewiseConstantFn",
    "Potential", "RangeError", "RefusalError", "Signal", "StructureReport", "ValidationError",
    "best_single_jump", "brute_force", "build_from_potential", "canonicalize", "certify",
    "check_lower_gap", "check_structure", "check_tvk_lower", "coincidence_set", "eval_penalty",
    "fidelity", "jump_budget", "lebj_audit", "max_jump", "monotone_gap_audit", "refine",
    "refine_levels", "solve_dp", "solve_rof", "subadditivity_gap", "total_energy", "tv_k_energy",
    "verify_potential",
]
__version__ = "0.1.0"
