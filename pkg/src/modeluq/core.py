"""Differentiable state-equation models and implicit-function sensitivities.

A model couples a state ``y``, parameters ``p`` and an input ``q`` through
``E(y, p, q) = 0`` and maps the solved state to sensor readings through an
observation operator ``h(y, p, q)``. Derivative shapes used throughout:

=========  ======================  ==========================================
name       shape                   meaning
=========  ======================  ==========================================
dE_dy      (d_y, d_y)              dE_k / dy_i
dE_dp      (d_y, n_p)              dE_k / dp_l
d2E_dyy    (d_y, d_y, d_y)         d2E_k / dy_i dy_j
d2E_dyp    (d_y, d_y, n_p)         d2E_k / dy_i dp_l
d2E_dpp    (d_y, n_p, n_p)         d2E_k / dp_l dp_m
dh_*       same with n_s leading   derivatives of the observation operator
=========  ======================  ==========================================
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ModelDefinitionError, NonConvergence, SingularJacobian

STATE_TOL = 1e-10
MAX_NEWTON = 100
COND_CAP = 1e12
# |E| cannot be resolved below a few ulps of the largest internal force
ROUNDOFF = 64 * np.finfo(float).eps

_DERIVATIVES = (
    "dE_dy", "dE_dp", "d2E_dyy", "d2E_dyp", "d2E_dpp",
    "dh_dy", "dh_dp", "d2h_dyy", "d2h_dyp", "d2h_dpp",
)


def fd_step(x, rel=1e-6, floor=1e-6):
    """Per-coordinate central-difference step ``max(floor, rel*|x|)``."""
    return np.maximum(floor, rel * np.abs(np.asarray(x, dtype=float)))


def _sym(t):
    return 0.5 * (t + t.swapaxes(-1, -2))


def central_diff(fun, x, rel=1e-6, floor=1e-6):
    """Central-difference derivative of ``fun`` at ``x``.

    The derivative index is appended as the last axis of the result.
    """
    x = np.asarray(x, dtype=float)
    steps = fd_step(x, rel, floor)
    f0 = np.asarray(fun(x), dtype=float)
    out = np.empty(f0.shape + (x.size,))
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += steps[i]
        xm[i] -= steps[i]
        out[..., i] = (np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2.0 * steps[i])
    return out


class StateEquationModel:
    """Base class for implicit models ``E(y, p, q) = 0`` with observations.

    Subclasses implement :meth:`residual` and :meth:`observe`. Every
    derivative method falls back to central differences; overriding one
    with an analytic expression is picked up automatically. First
    derivatives use the step ``max(1e-6, 1e-6*|x|)``. Second derivatives
    difference the first-derivative method with the same step when that
    method is analytic, and with ``max(1e-4, 1e-4*|x|)`` when it is itself
    a finite difference.

    Instances are not mutated after construction, so one model can be
    shared between threads.
    """

    state_tol = STATE_TOL
    max_newton = MAX_NEWTON
    cond_cap = COND_CAP

    def __init__(self, d_y, n_p, d_q, n_s, d_e=None, name=None):
        if d_e is not None and d_e != d_y:
            raise ModelDefinitionError(
                f"state equation must be square: d_E={d_e} but d_y={d_y}"
            )
        self.d_y = int(d_y)
        self.n_p = int(n_p)
        self.d_q = int(d_q)
        self.n_s = int(n_s)
        self.name = name or type(self).__name__

    # -- to be provided by subclasses -----------------------------------------

    def residual(self, y, p, q):
        raise NotImplementedError

    def observe(self, y, p, q):
        raise NotImplementedError

    # -- derivative oracles (finite-difference defaults) ------------------------

    def is_analytic(self, name):
        """True when ``name`` is overridden by the concrete class."""
        return getattr(type(self), name) is not getattr(StateEquationModel, name)

    def _second(self, first):
        # difference the first-derivative oracle; coarser step if it is itself FD
        rel = 1e-6 if self.is_analytic(first) else 1e-4
        return rel, rel

    def dE_dy(self, y, p, q):
        return central_diff(lambda v: self.residual(v, p, q), y)

    def dE_dp(self, y, p, q):
        return central_diff(lambda v: self.residual(y, v, q), p)

    def d2E_dyy(self, y, p, q):
        rel, floor = self._second("dE_dy")
        return _sym(central_diff(lambda v: self.dE_dy(v, p, q), y, rel, floor))

    def d2E_dyp(self, y, p, q):
        rel, floor = self._second("dE_dy")
        return central_diff(lambda v: self.dE_dy(y, v, q), p, rel, floor)

    def d2E_dpp(self, y, p, q):
        rel, floor = self._second("dE_dp")
        return _sym(central_diff(lambda v: self.dE_dp(y, v, q), p, rel, floor))

    def dh_dy(self, y, p, q):
        return central_diff(lambda v: self.observe(v, p, q), y)

    def dh_dp(self, y, p, q):
        return central_diff(lambda v: self.observe(y, v, q), p)

    def d2h_dyy(self, y, p, q):
        rel, floor = self._second("dh_dy")
        return _sym(central_diff(lambda v: self.dh_dy(v, p, q), y, rel, floor))

    def d2h_dyp(self, y, p, q):
        rel, floor = self._second("dh_dy")
        return central_diff(lambda v: self.dh_dy(y, v, q), p, rel, floor)

    def d2h_dpp(self, y, p, q):
        rel, floor = self._second("dh_dp")
        return _sym(central_diff(lambda v: self.dh_dp(y, v, q), p, rel, floor))

    def __repr__(self):
        return (f"{self.name}(d_y={self.d_y}, n_p={self.n_p}, "
                f"d_q={self.d_q}, n_s={self.n_s})")


class FunctionModel(StateEquationModel):
    """A :class:`StateEquationModel` assembled from plain callables.

    Any derivative passed as a keyword (``dE_dy=...`` etc.) replaces the
    finite-difference fallback for that oracle.
    """

    def __init__(self, residual, observe, d_y, n_p, d_q=1, n_s=None, d_e=None,
                 name=None, **derivatives):
        unknown = set(derivatives) - set(_DERIVATIVES)
        if unknown:
            raise TypeError(f"unknown derivative oracle(s): {sorted(unknown)}")
        if n_s is None:
            n_s = d_y
        super().__init__(d_y, n_p, d_q, n_s, d_e=d_e, name=name)
        self._residual = residual
        self._observe = observe
        self._oracles = dict(derivatives)

    def residual(self, y, p, q):
        return np.atleast_1d(np.asarray(self._residual(y, p, q), dtype=float))

    def observe(self, y, p, q):
        return np.atleast_1d(np.asarray(self._observe(y, p, q), dtype=float))

    def is_analytic(self, name):
        return name in self._oracles

    def _call(self, name, y, p, q):
        fun = self._oracles.get(name)
        if fun is None:
            return getattr(StateEquationModel, name)(self, y, p, q)
        return np.asarray(fun(y, p, q), dtype=float)

    def dE_dy(self, y, p, q):
        return self._call("dE_dy", y, p, q).reshape(self.d_y, self.d_y)

    def dE_dp(self, y, p, q):
        return self._call("dE_dp", y, p, q).reshape(self.d_y, self.n_p)

    def d2E_dyy(self, y, p, q):
        return self._call("d2E_dyy", y, p, q).reshape(self.d_y, self.d_y, self.d_y)

    def d2E_dyp(self, y, p, q):
        return self._call("d2E_dyp", y, p, q).reshape(self.d_y, self.d_y, self.n_p)

    def d2E_dpp(self, y, p, q):
        return self._call("d2E_dpp", y, p, q).reshape(self.d_y, self.n_p, self.n_p)

    def dh_dy(self, y, p, q):
        return self._call("dh_dy", y, p, q).reshape(self.n_s, self.d_y)

    def dh_dp(self, y, p, q):
        return self._call("dh_dp", y, p, q).reshape(self.n_s, self.n_p)

    def d2h_dyy(self, y, p, q):
        return self._call("d2h_dyy", y, p, q).reshape(self.n_s, self.d_y, self.d_y)

    def d2h_dyp(self, y, p, q):
        return self._call("d2h_dyp", y, p, q).reshape(self.n_s, self.d_y, self.n_p)

    def d2h_dpp(self, y, p, q):
        return self._call("d2h_dpp", y, p, q).reshape(self.n_s, self.n_p, self.n_p)


@dataclass(frozen=True)
class InputSchedule:
    """Ordered inputs ``q_1..q_nq`` of a loading-unloading scenario.

    ``phases`` holds ``"loading"`` or ``"unloading"`` per input. The turning
    point is the last loading input before the first unloading one.
    """

    inputs: np.ndarray
    setpoints: Optional[np.ndarray] = None
    phases: Optional[tuple] = None

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs[:, None]
        if inputs.ndim != 2 or inputs.shape[0] < 1:
            raise ValueError("a schedule needs at least one input")
        object.__setattr__(self, "inputs", inputs)
        if self.setpoints is not None:
            sp = np.asarray(self.setpoints, dtype=float)
            if sp.shape[0] != inputs.shape[0]:
                raise ValueError("setpoints must have one entry per input")
            object.__setattr__(self, "setpoints", sp)
        if self.phases is not None:
            phases = tuple(self.phases)
            if len(phases) != inputs.shape[0]:
                raise ValueError("phases must have one entry per input")
            bad = set(phases) - {"loading", "unloading"}
            if bad:
                raise ValueError(f"unknown phase tag(s): {sorted(bad)}")
            object.__setattr__(self, "phases", phases)

    @property
    def n_q(self):
        return self.inputs.shape[0]

    @property
    def d_q(self):
        return self.inputs.shape[1]

    def subset(self, indices):
        idx = np.asarray(indices, dtype=int)
        return InputSchedule(
            self.inputs[idx],
            None if self.setpoints is None else self.setpoints[idx],
            None if self.phases is None else tuple(self.phases[i] for i in idx),
        )

    def with_inputs(self, inputs):
        return InputSchedule(inputs, self.setpoints, self.phases)

    @classmethod
    def ramp(cls, peak, n_up=15, n_down=14, d_q=1):
        """Setpoints ramping 0 -> peak in ``n_up`` steps and back to 0.

        The defaults reproduce the 15 loading + 14 unloading pattern with
        zero endpoints.
        """
        up = np.linspace(0.0, peak, n_up)
        down = np.linspace(peak, 0.0, n_down + 1)[1:]
        forces = np.concatenate([up, down])
        inputs = np.zeros((forces.size, d_q))
        inputs[:, 0] = forces
        phases = ("loading",) * n_up + ("unloading",) * n_down
        return cls(inputs, forces.copy(), phases)


@dataclass
class StateSolution:
    states: np.ndarray
    residual_norms: np.ndarray
    iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def _check_conditioning(model, jac):
    if not np.all(np.isfinite(jac)):
        raise SingularJacobian("state Jacobian has non-finite entries")
    cond = np.linalg.cond(jac)
    if not np.isfinite(cond) or cond > model.cond_cap:
        raise SingularJacobian(f"condition number of dE/dy is {cond:.3e}")


def _polish(model, p, q, y, res, norm):
    # one extra Newton step so finite differences of the solution are not
    # dominated by the solver tolerance; kept only if it does not hurt
    if norm == 0.0:
        return y
    try:
        y_new = y + np.linalg.solve(model.dE_dy(y, p, q), -res)
    except np.linalg.LinAlgError:
        return y
    if np.linalg.norm(model.residual(y_new, p, q)) <= norm:
        return y_new
    return y


def _newton(model, p, q, y0, tol, max_iter):
    p = np.asarray(p, dtype=float)
    q = np.atleast_1d(np.asarray(q, dtype=float))
    y = np.array(y0, dtype=float, copy=True).reshape(model.d_y)
    if not np.all(np.isfinite(y)):
        raise ValueError("initial state must be finite")
    res = model.residual(y, p, q)
    if res.shape != (model.d_y,):
        raise ModelDefinitionError(
            f"residual has shape {res.shape}, expected ({model.d_y},)"
        )
    norm = np.linalg.norm(res)
    floor = 0.0
    for it in range(max_iter + 1):
        if norm <= max(tol, floor):
            return _polish(model, p, q, y, res, norm), norm, it
        if it == max_iter:
            break
        jac = model.dE_dy(y, p, q)
        _check_conditioning(model, jac)
        internal = jac @ y
        floor = ROUNDOFF * (np.linalg.norm(np.abs(jac) @ np.abs(y)) + np.linalg.norm(res - internal))
        step = np.linalg.solve(jac, -res)
        t = 1.0
        while True:
            y_try = y + t * step
            res_try = model.residual(y_try, p, q)
            norm_try = np.linalg.norm(res_try)
            # Armijo on ||E||; accept a tiny step anyway to avoid stalling at roundoff
            if norm_try <= (1.0 - 1e-4 * t) * norm or t < 1e-8:
                break
            t *= 0.5
        y, res, norm = y_try, res_try, norm_try
    raise NonConvergence(
        f"Newton did not reach |E| <= {tol:g} in {max_iter} iterations "
        f"(|E| = {norm:.3e})"
    )


def solve_state(model, p, q, y0=None, *, tol=None, max_iter=None):
    """Solve ``E(y, p, q) = 0`` by damped Newton with backtracking.

    Returns the state ``y`` with ``|E(y, p, q)| <= tol``. When the internal
    forces are so large that ``tol`` lies below double-precision round-off,
    a residual within a few ulps of those forces is accepted instead.
    """
    if y0 is None:
        y0 = np.zeros(model.d_y)
    tol = model.state_tol if tol is None else tol
    max_iter = model.max_newton if max_iter is None else max_iter
    return _newton(model, p, q, y0, tol, max_iter)[0]


def solve_schedule(model, p, inputs, y0=None, *, tol=None, max_iter=None):
    """Solve the state for every input, warm-starting from the previous one."""
    if isinstance(inputs, InputSchedule):
        inputs = inputs.inputs
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs[:, None]
    tol = model.state_tol if tol is None else tol
    max_iter = model.max_newton if max_iter is None else max_iter
    n_q = inputs.shape[0]
    states = np.empty((n_q, model.d_y))
    norms = np.empty(n_q)
    iters = np.empty(n_q, dtype=int)
    guess = np.zeros(model.d_y) if y0 is None else np.asarray(y0, dtype=float)
    for j in range(n_q):
        y, norm, it = _newton(model, p, inputs[j], guess, tol, max_iter)
        states[j], norms[j], iters[j] = y, norm, it
        guess = y
    return StateSolution(states, norms, iters)


def state_sensitivity(model, p, q, y):
    """First-order state sensitivity ``y'(p) = -(dE/dy)^-1 dE/dp``."""
    p = np.asarray(p, dtype=float)
    q = np.atleast_1d(np.asarray(q, dtype=float))
    jac = model.dE_dy(y, p, q)
    _check_conditioning(model, jac)
    return -np.linalg.solve(jac, model.dE_dp(y, p, q))


def _second_order_rhs(model, p, q, y, yp):
    """Tensor ``T[k, l, m]`` such that ``y''(e_l; e_m) = -(dE/dy)^-1 T[:, l, m]``."""
    eyy = model.d2E_dyy(y, p, q)
    eyp = model.d2E_dyp(y, p, q)
    epp = model.d2E_dpp(y, p, q)
    t = np.einsum("kab,al,bm->klm", eyy, yp, yp)
    cross = np.einsum("kam,al->klm", eyp, yp)
    return t + cross + cross.transpose(0, 2, 1) + epp


def state_second_tensor(model, p, q, y, yp=None):
    """All second derivatives ``y''[:, l, m]`` of the state w.r.t. ``p``."""
    p = np.asarray(p, dtype=float)
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if yp is None:
        yp = state_sensitivity(model, p, q, y)
    jac = model.dE_dy(y, p, q)
    _check_conditioning(model, jac)
    rhs = _second_order_rhs(model, p, q, y, yp)
    sol = np.linalg.solve(jac, rhs.reshape(model.d_y, -1))
    return -sol.reshape(model.d_y, model.n_p, model.n_p)


def state_second_directional(model, p, q, y, h1, h2):
    """Second directional derivative ``y''(p)(h1; h2)``.

    The mixed term is used in its symmetric form
    ``E_yp(y'h1; h2) + E_yp(y'h2; h1)``, which is the exact second
    derivative for any pair of directions.
    """
    p = np.asarray(p, dtype=float)
    q = np.atleast_1d(np.asarray(q, dtype=float))
    h1 = np.asarray(h1, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    jac = model.dE_dy(y, p, q)
    _check_conditioning(model, jac)
    yp = -np.linalg.solve(jac, model.dE_dp(y, p, q))
    v1 = yp @ h1
    v2 = yp @ h2
    eyy = model.d2E_dyy(y, p, q)
    eyp = model.d2E_dyp(y, p, q)
    epp = model.d2E_dpp(y, p, q)
    rhs = (np.einsum("kab,a,b->k", eyy, v1, v2)
           + np.einsum("kal,a,l->k", eyp, v1, h2)
           + np.einsum("kal,a,l->k", eyp, v2, h1)
           + np.einsum("klm,l,m->k", epp, h1, h2))
    return -np.linalg.solve(jac, rhs)


def derivative_report(model, y, p, q, rel=1e-6) -> dict:
    """Relative discrepancy of every oracle against central differences.

    Used by the derivative test-suite and the ``check`` helpers; a value
    of ``0`` means the oracle matches its finite-difference twin exactly.
    """
    y = np.asarray(y, dtype=float)
    p = np.asarray(p, dtype=float)
    q = np.atleast_1d(np.asarray(q, dtype=float))
    pairs = {
        "dE_dy": (lambda: model.dE_dy(y, p, q),
                  lambda: central_diff(lambda v: model.residual(v, p, q), y, rel)),
        "dE_dp": (lambda: model.dE_dp(y, p, q),
                  lambda: central_diff(lambda v: model.residual(y, v, q), p, rel)),
        "d2E_dyy": (lambda: model.d2E_dyy(y, p, q),
                    lambda: central_diff(lambda v: model.dE_dy(v, p, q), y, rel)),
        "d2E_dyp": (lambda: model.d2E_dyp(y, p, q),
                    lambda: central_diff(lambda v: model.dE_dy(y, v, q), p, rel)),
        "d2E_dpp": (lambda: model.d2E_dpp(y, p, q),
                    lambda: central_diff(lambda v: model.dE_dp(y, v, q), p, rel)),
        "dh_dy": (lambda: model.dh_dy(y, p, q),
                  lambda: central_diff(lambda v: model.observe(v, p, q), y, rel)),
        "dh_dp": (lambda: model.dh_dp(y, p, q),
                  lambda: central_diff(lambda v: model.observe(y, v, q), p, rel)),
        "d2h_dyy": (lambda: model.d2h_dyy(y, p, q),
                    lambda: central_diff(lambda v: model.dh_dy(v, p, q), y, rel)),
        "d2h_dyp": (lambda: model.d2h_dyp(y, p, q),
                    lambda: central_diff(lambda v: model.dh_dy(y, v, q), p, rel)),
        "d2h_dpp": (lambda: model.d2h_dpp(y, p, q),
                    lambda: central_diff(lambda v: model.dh_dp(y, v, q), p, rel)),
    }
    out = {}
    for name, (analytic, numeric) in pairs.items():
        a = np.asarray(analytic())
        b = np.asarray(numeric())
        out[name] = relative_error(a, b)
    return out


def relative_error(a, b, scale: Optional[float] = None) -> float:
    """``|a - b| / max(|b|, scale)`` in the Frobenius norm.

    With both arrays (numerically) zero the error is 0.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    diff = np.linalg.norm(a - b)
    ref = np.linalg.norm(b)
    if scale is not None:
        ref = max(ref, scale)
    if ref == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return float(diff / ref)


def as_inputs(inputs: Sequence | np.ndarray | InputSchedule) -> np.ndarray:
    if isinstance(inputs, InputSchedule):
        return inputs.inputs
    arr = np.asarray(inputs, dtype=float)
    return arr[:, None] if arr.ndim == 1 else arr


Oracle = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
