"""Calibration/validation hypothesis test for model uncertainty."""

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import ModelUQError, NormalityRejected, NormalityWarning
from ..estimation import calibrate, identify_parameters
from .chi2 import chi2_sf
from .ellipsoid import mahalanobis_sq
from .splits import split

UNDERFLOW = 1e-12


@dataclass
class ScenarioResult:
    scenario: str
    p_cal: np.ndarray
    C_cal: np.ndarray
    p_val: np.ndarray
    mahalanobis_sq: float
    alpha_min: float
    rejected: bool
    clipped: bool = False
    underflow: bool = False
    cal_inputs: Optional[np.ndarray] = None
    val_inputs: Optional[np.ndarray] = None

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "p_cal": [float(v) for v in self.p_cal],
            "C_cal": [[float(v) for v in row] for row in self.C_cal],
            "p_val": [float(v) for v in self.p_val],
            "mahalanobis_sq": float(self.mahalanobis_sq),
            "alpha_min": float(self.alpha_min),
            "rejected": bool(self.rejected),
            "eigenvalues_clipped": bool(self.clipped),
            "alpha_underflow": bool(self.underflow),
            "cal_inputs": [int(j) for j in self.cal_inputs],
            "val_inputs": [int(j) for j in self.val_inputs],
        }


@dataclass
class UncertaintyReport:
    model_id: str
    tol: float
    n_tests: int
    scenarios: list
    verdict: int
    normality: list = field(default_factory=list)
    normality_waived: bool = False

    @property
    def threshold(self):
        return self.tol / self.n_tests

    @property
    def rejected(self):
        return self.verdict == 1

    def to_dict(self):
        return {
            "model": self.model_id,
            "tol": float(self.tol),
            "n_tests": int(self.n_tests),
            "threshold": float(self.threshold),
            "verdict": "reject" if self.verdict else "accept",
            "verdict_code": int(self.verdict),
            "normality_waived": bool(self.normality_waived),
            "normality": [
                {"sensor": r.sensor, "W": float(r.w), "p_value": float(r.p_value),
                 "sigma_hat": float(r.sigma_hat), "passed": bool(r.passed)}
                for r in self.normality
            ],
            "scenarios": [s.to_dict() for s in self.scenarios],
        }


ValidationProvider = Callable[[int, object, object, object], object]


def run_algorithm1(model, layout, tensor, schemes, tol, p0, *, n_tests=None, bounds=None,
                   normality=None, normality_policy="abort", early_exit=False,
                   validation_provider: Optional[ValidationProvider] = None,
                   second_order=True, model_id=None):
    """Run the calibration/validation test over a list of split schemes.

    For each scenario the parameters and covariance are identified on the
    calibration inputs, the parameters are re-identified on the validation
    inputs, and ``alpha_min`` is the chi-squared survival function at their
    Mahalanobis distance. A scenario rejects when ``alpha_min < tol/n_tests``.

    ``normality`` is a list of screen results; None records the screen as
    waived. With ``normality_policy="abort"`` a failed screen raises
    :class:`NormalityRejected`, with ``"warn"`` it emits a warning.

    ``validation_provider(index, scheme, cal_estimate, val_tensor)`` may
    replace the validation tensor, e.g. with data simulated from the
    calibrated model.
    """
    if not 0.0 < tol < 1.0:
        raise ValueError("TOL must lie in (0, 1)")
    schemes = list(schemes)
    if not schemes:
        raise ValueError("at least one split scheme is required")
    n_tests = len(schemes) if n_tests is None else int(n_tests)
    if n_tests < 1:
        raise ValueError("n_tests must be >= 1")
    if normality_policy not in ("abort", "warn"):
        raise ValueError("normality_policy must be 'abort' or 'warn'")
    waived = normality is None
    normality = list(normality or [])
    failed = [r.sensor for r in normality if not r.passed]
    if failed:
        msg = f"normality screen failed for sensor(s) {failed}"
        if normality_policy == "abort":
            raise NormalityRejected(msg)
        warnings.warn(msg, NormalityWarning, stacklevel=2)

    threshold = tol / n_tests
    results = []
    for index, scheme in enumerate(schemes):
        part = split(tensor.schedule, scheme, tensor.n_m)
        try:
            cal = tensor.select(inputs=part.cal_inputs)
            val = tensor.select(inputs=part.val_inputs)
            est = calibrate(model, layout, cal.with_layout(layout), p0, bounds=bounds,
                            second_order=second_order)
            if validation_provider is not None:
                val = validation_provider(index, scheme, est, val)
            p_val = identify_parameters(model, layout, val.with_layout(layout), est.p,
                                        bounds=bounds).p
        except ModelUQError as exc:
            raise type(exc)(f"scenario {scheme.label!r}: {exc}") from exc
        d2, clipped = mahalanobis_sq(p_val, est.p, est.C)
        a = chi2_sf(d2, model.n_p)
        results.append(ScenarioResult(scheme.label, est.p, est.C, p_val, d2, a, a < threshold,
                                      clipped, a < UNDERFLOW, part.cal_inputs, part.val_inputs))
        if early_exit and a < threshold:
            break
    verdict = int(any(r.rejected for r in results))
    return UncertaintyReport(model_id or getattr(model, "name", "model"), tol, n_tests, results,
                             verdict, normality, waived)
