"""Robust lognormal severity estimation from deductible- and limit-modified payments."""
from ._accel import backend
from .coefficients import CCoefficients, Proportions, c_coeffs_y, c_coeffs_z
from .composite import CompositeParams, fit_composite
from .errors import LnRobustError
from .mle import FitResult, fit_mle_y, fit_mle_z, mle_cov_y, mle_cov_z
from .mtm import fit_mtm_y, fit_mtm_z
from .mwm import fit_mwm_y, fit_mwm_z, mwm_cov_y, mwm_cov_z
from .payments import GroundUpModel, PaymentSample, PolicyFrame, SeededRng, frame, sample_payments, to_log_scale
from .risk import RiskSpec, adapt_proportions, are, ks_statistic, lev, risk_measure
from .simulation import (EstimatorSpec, SensitivityConfig, StudyConfig, appendix_fixtures, run_study,
                         sensitivity_curves)

__version__ = "0.1.0"

__all__ = [
    "backend", "CCoefficients", "Proportions", "c_coeffs_y", "c_coeffs_z", "CompositeParams",
    "fit_composite", "LnRobustError", "FitResult", "fit_mle_y", "fit_mle_z", "mle_cov_y", "mle_cov_z",
    "fit_mtm_y", "fit_mtm_z", "fit_mwm_y", "fit_mwm_z", "mwm_cov_y", "mwm_cov_z", "GroundUpModel",
    "PaymentSample", "PolicyFrame", "SeededRng", "frame", "sample_payments", "to_log_scale", "RiskSpec",
    "adapt_proportions", "are", "ks_statistic", "lev", "risk_measure", "EstimatorSpec",
    "SensitivityConfig", "StudyConfig", "appendix_fixtures", "run_study", "sensitivity_curves",
]
