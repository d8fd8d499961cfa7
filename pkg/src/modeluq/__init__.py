"""Parameter identification, sensor design and model-uncertainty detection
for implicit state-equation models."""

__version__ = "0.1.0"

from .core import (FunctionModel, InputSchedule, StateEquationModel, solve_schedule,  # noqa: E402
                   solve_state, state_second_tensor, state_sensitivity)
from .estimation import (Estimate, MeasurementTensor, SensorLayout, calibrate,  # noqa: E402
                         covariance, identify_parameters)
from .oed import (CardinalityConstraint, Criterion, criterion_value, evaluate_design,  # noqa: E402
                  exhaustive_select, greedy_select)
