"""Synthetic measurement campaigns and force-jitter correction."""

from __future__ import annotations

import numpy as np

from ..core import InputSchedule, solve_schedule
from ..errors import ZeroRealizedForce
from ..estimation import MeasurementTensor, SensorLayout


def friction_inputs(forces, friction=None):
    """Two-column input ``(q_P, q_fric)`` for one force history."""
    forces = np.asarray(forces, dtype=float)
    fric = np.zeros_like(forces) if friction is None else np.asarray(friction.series(forces))
    return np.column_stack([forces, fric])


def generate_synthetic_measurements(model, p_true, schedule, layout, n_series, seed, *,
                                    friction=None, jitter=0.0, sigma=None):
    """Noisy sensor readings of ``model`` over ``n_series`` repetitions.

    Each series realizes the setpoints with multiplicative jitter of
    relative size ``jitter`` (zero setpoints stay exactly zero), applies
    ``friction`` along the realized history and adds Gaussian noise with
    the layout's standard deviations, or ``sigma`` when given (which may be
    zero for noiseless data).
    """
    rng = np.random.default_rng(seed)
    noise = layout.sigma
    if sigma is not None:
        noise = np.broadcast_to(np.asarray(sigma, float), layout.sigma.shape)
    setpoints = schedule.setpoints if schedule.setpoints is not None else schedule.inputs[:, 0]
    z = np.empty((n_series, schedule.n_q, layout.n_s))
    realized = np.empty((n_series, schedule.n_q))
    for i in range(n_series):
        q = setpoints * (1.0 + jitter * rng.standard_normal(setpoints.size))
        realized[i] = q
        inputs = friction_inputs(q, friction)
        states = solve_schedule(model, p_true, inputs).states
        h = np.array([model.observe(y, p_true, u) for y, u in zip(states, inputs)])
        z[i] = h + rng.standard_normal(h.shape) * noise
    sched = InputSchedule(friction_inputs(setpoints), setpoints, schedule.phases)
    return MeasurementTensor(z, sched, layout, realized)


def correct_measurements(tensor, setpoints=None):
    """Rescale readings to the nominal setpoints, ``z * q_setpoint / q_realized``.

    Cells with a zero setpoint are left as measured. The returned tensor
    records the setpoints as realized forces, so correcting twice changes
    nothing.
    """
    if tensor.realized is None:
        return tensor
    sp = tensor.schedule.setpoints if setpoints is None else np.asarray(setpoints, dtype=float)
    if sp is None:
        sp = tensor.schedule.inputs[:, 0]
    sp = np.broadcast_to(sp, tensor.realized.shape)
    active = sp != 0
    if np.any(tensor.realized[active] == 0):
        i, j = np.argwhere(active & (tensor.realized == 0))[0]
        raise ZeroRealizedForce(f"series {i}, input {j}: realized force is zero")
    factor = np.ones_like(tensor.realized)
    factor[active] = sp[active] / tensor.realized[active]
    out = tensor.with_z(tensor.z * factor[:, :, None])
    return MeasurementTensor(out.z, out.schedule, out.layout, np.array(sp, dtype=float))


def default_layout(surrogate):
    return SensorLayout(surrogate.sensor_sigmas(), names=surrogate.sensor_names())
