"""Vine copulas whose pair-copula Kendall's tau is a penalized GAM of covariates."""
from .families import FamilySpec, parse_family
from .gamfit import EdgeData, FitOptions, GamFit, GamSpec, fit
from .select import SelectionConfig, select_family, select_gam_structure
from .simstudy import ScenarioConfig, StudyReport, run_study
from .vine import (
    VineModel,
    VineStructure,
    density,
    dvine,
    fit_sequential,
    logdensity,
    rosenblatt,
    simulate,
    validate_structure,
)

__version__ = "0.1.0"

__all__ = [
    "EdgeData",
    "FamilySpec",
    "FitOptions",
    "GamFit",
    "GamSpec",
    "ScenarioConfig",
    "SelectionConfig",
    "StudyReport",
    "VineModel",
    "VineStructure",
    "density",
    "dvine",
    "fit",
    "fit_sequential",
    "logdensity",
    "parse_family",
    "rosenblatt",
    "run_study",
    "select_family",
    "select_gam_structure",
    "simulate",
    "validate_structure",
]
