"""Weighted least-squares identification and covariance of the estimate.

Vectorization convention: the residual vector stacks ``r[i, j, k]`` (series
``i``, input ``j``, sensor ``k``) in C order, so the sensor index runs
fastest, then the input, then the series.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import InputSchedule, _check_conditioning, solve_schedule
from .errors import NonConvergence, RankDeficient, SingularH, SingularHWarning

TOL_GRAD = 1e-8
MAX_ITER = 200
RANK_TOL = 1e-10
H_COND_CAP = 1e12
MAX_POLISH = 10
# Gauss-Newton predicted decrease relative to f; keeps large-misfit fits from stopping early
TOL_DECREASE = 1e-10


@dataclass(frozen=True)
class SensorLayout:
    sigma: np.ndarray
    omega: Optional[np.ndarray] = None
    names: Optional[tuple] = None

    def __post_init__(self):
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        if sigma.ndim != 1 or np.any(~np.isfinite(sigma)) or np.any(sigma <= 0):
            raise ValueError("every sensor standard deviation must be finite and > 0")
        omega = np.ones(sigma.size, dtype=int) if self.omega is None else np.asarray(self.omega)
        if omega.shape != sigma.shape:
            raise ValueError("omega and sigma must have the same length")
        if not np.all((omega == 0) | (omega == 1)):
            raise ValueError("omega must be binary")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "omega", omega.astype(int))
        if self.names is not None:
            names = tuple(self.names)
            if len(names) != sigma.size:
                raise ValueError("one name per sensor expected")
            object.__setattr__(self, "names", names)

    @property
    def n_s(self):
        return self.sigma.size

    @property
    def n_active(self):
        return int(self.omega.sum())

    def with_omega(self, omega):
        return replace(self, omega=np.asarray(omega))

    def with_sigma(self, sigma):
        return replace(self, sigma=np.asarray(sigma, dtype=float))

    def sensor_names(self):
        return self.names or tuple(f"s{k + 1}" for k in range(self.n_s))


@dataclass(frozen=True)
class MeasurementTensor:
    """Measurements ``z[i, j, k]`` with the schedule and sensor layout.

    ``realized`` optionally stores the actually applied force per series
    and input, shape ``(n_M, n_q)``.
    """

    z: np.ndarray
    schedule: InputSchedule
    layout: SensorLayout
    realized: Optional[np.ndarray] = None

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 3:
            raise ValueError("z must have shape (n_M, n_q, n_S)")
        if z.shape[1] != self.schedule.n_q or z.shape[2] != self.layout.n_s:
            raise ValueError(
                f"z has shape {z.shape} but the schedule has {self.schedule.n_q} "
                f"inputs and the layout {self.layout.n_s} sensors"
            )
        if not np.all(np.isfinite(z)):
            raise ValueError("measurements must be finite")
        object.__setattr__(self, "z", z)
        if self.realized is not None:
            realized = np.asarray(self.realized, dtype=float)
            if realized.shape != z.shape[:2]:
                raise ValueError("realized forces must have shape (n_M, n_q)")
            object.__setattr__(self, "realized", realized)

    @property
    def n_m(self):
        return self.z.shape[0]

    @property
    def n_q(self):
        return self.z.shape[1]

    @property
    def n_s(self):
        return self.z.shape[2]

    @property
    def size(self):
        return self.z.size

    def select(self, series=None, inputs=None):
        """Sub-tensor restricted to the given series and input indices."""
        s = np.arange(self.n_m) if series is None else np.asarray(series, dtype=int)
        q = np.arange(self.n_q) if inputs is None else np.asarray(inputs, dtype=int)
        realized = None if self.realized is None else self.realized[np.ix_(s, q)]
        return MeasurementTensor(self.z[np.ix_(s, q)], self.schedule.subset(q),
                                 self.layout, realized)

    def with_layout(self, layout):
        return replace(self, layout=layout)

    def with_omega(self, omega):
        return replace(self, layout=self.layout.with_omega(omega))

    def with_z(self, z):
        return replace(self, z=np.asarray(z, dtype=float))

    def with_schedule(self, schedule):
        return replace(self, schedule=schedule)


@dataclass
class Estimate:
    p: np.ndarray
    objective: float
    gradient_norm: float
    iterations: int
    converged: bool
    C: Optional[np.ndarray] = None
    J: Optional[np.ndarray] = field(default=None, repr=False)
    S: Optional[np.ndarray] = field(default=None, repr=False)
    stop_reason: str = ""


def _inputs(tensor):
    return tensor.schedule.inputs


def model_outputs(model, p, inputs, y0=None):
    """Observations ``h(y_j(p), p, q_j)`` for each input, shape ``(n_q, n_S)``."""
    if isinstance(inputs, InputSchedule):
        inputs = inputs.inputs
    sol = solve_schedule(model, p, inputs, y0)
    out = np.array([model.observe(y, p, q) for y, q in zip(sol.states, inputs)])
    return out, sol.states


def _weights(layout, reps):
    return np.tile(layout.omega.astype(float), reps)


def residuals(model, layout, tensor, p, *, _states=None):
    """``r = Sigma^-1 (z - h)`` for every series, input and sensor."""
    p = np.asarray(p, dtype=float)
    h, _ = model_outputs(model, p, _inputs(tensor), _states)
    return ((tensor.z - h[None]) / layout.sigma).ravel()


def objective(model, layout, tensor, p):
    r = residuals(model, layout, tensor, p)
    return 0.5 * float(np.sum(_weights(layout, tensor.n_m * tensor.n_q) * r * r))


def output_jacobians(model, p, inputs, states):
    """Total derivative ``dh_j/dp`` per input, shape ``(n_q, n_S, n_p)``."""
    from .core import state_sensitivity
    out = np.empty((len(states), model.n_s, model.n_p))
    for j, (y, q) in enumerate(zip(states, inputs)):
        yp = state_sensitivity(model, p, q, y)
        out[j] = model.dh_dy(y, p, q) @ yp + model.dh_dp(y, p, q)
    return out


def _jacobian_from_blocks(blocks, layout, n_m):
    per_series = -(blocks / layout.sigma[None, :, None]).reshape(-1, blocks.shape[-1])
    return np.tile(per_series, (n_m, 1))


def assemble_jacobian(model, layout, tensor, p):
    """``J = dr/dp`` with rows ordered like :func:`residuals`."""
    p = np.asarray(p, dtype=float)
    inputs = _inputs(tensor)
    _, states = model_outputs(model, p, inputs)
    blocks = output_jacobians(model, p, inputs, states)
    return _jacobian_from_blocks(blocks, layout, tensor.n_m)


def gradient(model, layout, tensor, p):
    r = residuals(model, layout, tensor, p)
    J = assemble_jacobian(model, layout, tensor, p)
    return J.T @ (_weights(layout, tensor.n_m * tensor.n_q) * r)


def assemble_second_order(model, layout, tensor, p, r=None):
    """``S = sum_i r_i Omega_ii d2r_i/dp2`` via an adjoint contraction.

    With ``c_jk = omega_k sum_i r_ijk / sigma_k`` the sum collapses to one
    term per input. The state's second derivative is never formed: the
    adjoint ``mu_j = E_y^-T h_y^T c_j`` contracts it against the
    second-order right-hand side directly.
    """
    p = np.asarray(p, dtype=float)
    inputs = _inputs(tensor)
    h, states = model_outputs(model, p, inputs)
    if r is None:
        r = ((tensor.z - h[None]) / layout.sigma).ravel()
    R = r.reshape(tensor.z.shape).sum(axis=0)
    c = layout.omega * R / layout.sigma
    S = np.zeros((model.n_p, model.n_p))
    for j, (y, q) in enumerate(zip(states, inputs)):
        cj = c[j]
        if not np.any(cj):
            continue
        ey = model.dE_dy(y, p, q)
        _check_conditioning(model, ey)
        A = -np.linalg.solve(ey, model.dE_dp(y, p, q))
        hy = model.dh_dy(y, p, q)
        hyy = np.einsum("k,kab->ab", cj, model.d2h_dyy(y, p, q))
        hyp = np.einsum("k,kal->al", cj, model.d2h_dyp(y, p, q))
        hpp = np.einsum("k,klm->lm", cj, model.d2h_dpp(y, p, q))
        cross = A.T @ hyp
        direct = A.T @ hyy @ A + cross + cross.T + hpp
        mu = np.linalg.solve(ey.T, hy.T @ cj)
        eyy = np.einsum("k,kab->ab", mu, model.d2E_dyy(y, p, q))
        eyp = np.einsum("k,kal->al", mu, model.d2E_dyp(y, p, q))
        epp = np.einsum("k,klm->lm", mu, model.d2E_dpp(y, p, q))
        ecross = A.T @ eyp
        adjoint = A.T @ eyy @ A + ecross + ecross.T + epp
        S -= direct - adjoint
    return 0.5 * (S + S.T)


def _reps(J, layout):
    if J.shape[0] % layout.n_s:
        raise ValueError("Jacobian row count is not a multiple of the sensor count")
    return J.shape[0] // layout.n_s


def _hessian_inverse(H):
    H = 0.5 * (H + H.T)
    if not np.all(np.isfinite(H)):
        raise SingularH("H has non-finite entries")
    d = np.sqrt(np.abs(np.diag(H)))
    if np.any(d == 0):
        raise SingularH("H has a zero diagonal entry")
    Hs = H / np.outer(d, d)
    cond = np.linalg.cond(Hs)
    if not np.isfinite(cond) or cond >= H_COND_CAP:
        raise SingularH(f"scaled condition number of H is {cond:.3e}")
    try:
        L = np.linalg.cholesky(Hs)
        Linv = np.linalg.solve(L, np.eye(len(H)))
        inv = Linv.T @ Linv
    except np.linalg.LinAlgError:
        warnings.warn("H is indefinite; using a clipped pseudo-inverse", SingularHWarning,
                      stacklevel=3)
        vals, vecs = np.linalg.eigh(Hs)
        keep = vals > 1e-14 * np.abs(vals).max()
        inv = (vecs[:, keep] / vals[keep]) @ vecs[:, keep].T
    inv = inv / np.outer(d, d)
    return 0.5 * (inv + inv.T)


def hessian(J, S, layout):
    w = _weights(layout, _reps(J, layout))
    H = J.T @ (w[:, None] * J)
    if S is not None:
        H = H + S
    return 0.5 * (H + H.T)


def covariance(J, S, layout):
    """``C = H^-1 J^T Omega^2 J H^-1`` with ``H = J^T Omega J + S``."""
    w = _weights(layout, _reps(J, layout))
    Hinv = _hessian_inverse(hessian(J, S, layout))
    B = J.T @ ((w * w)[:, None] * J)
    C = Hinv @ B @ Hinv
    return 0.5 * (C + C.T)


def sensitivity_dz_p(J, S, layout):
    """Linearized derivative of the estimate w.r.t. the data, ``-H^-1 J^T Omega Sigma^-1``."""
    reps = _reps(J, layout)
    w = _weights(layout, reps)
    inv_sigma = np.tile(1.0 / layout.sigma, reps)
    Hinv = _hessian_inverse(hessian(J, S, layout))
    return -Hinv @ (J.T * (w * inv_sigma))


def _check_rank(J, w):
    active = J[w > 0]
    if active.shape[0] == 0 or not np.any(active):
        raise RankDeficient("no active rows in the Jacobian")
    sv = np.linalg.svd(active, compute_uv=False)
    if sv.size < J.shape[1] or sv[-1] < RANK_TOL * sv[0]:
        ratio = 0.0 if sv.size < J.shape[1] else sv[-1] / sv[0]
        raise RankDeficient(f"weighted Jacobian is rank deficient (s_min/s_max = {ratio:.3e})")


def identify_parameters(model, layout, tensor, p0, *, bounds=None, tol_grad=TOL_GRAD,
                        max_iter=MAX_ITER, lam0=1e-3):
    """Minimize ``f = 1/2 r^T Omega r`` by Levenberg-Marquardt.

    The damping is scaled by ``diag(J^T Omega J)``. The second-order term
    ``S`` is left out of the iteration. ``bounds`` is an optional
    ``(lower, upper)`` pair; steps leaving it are rejected like steps that
    increase ``f``. Converged means ``|grad f| <= tol_grad * max(1, f)``
    together with a Gauss-Newton predicted decrease below
    ``TOL_DECREASE * max(1, f)`` (the gradient test alone is not scale
    free and stops early on badly fitting models), or, when round-off has made further decrease impossible, that the
    model-predicted decrease is below machine precision relative to ``f``.
    """
    if layout.n_active < model.n_p:
        raise RankDeficient(
            f"{layout.n_active} active sensors cannot identify {model.n_p} parameters"
        )
    p = np.array(p0, dtype=float)
    lo = hi = None
    if bounds is not None:
        lo = np.asarray(bounds[0], dtype=float)
        hi = np.asarray(bounds[1], dtype=float)
        if np.any(p < lo) or np.any(p > hi):
            raise ValueError("starting point lies outside the bounds")
    inputs = _inputs(tensor)
    w = _weights(layout, tensor.n_m * tensor.n_q)
    z = tensor.z

    def evaluate(pp, guess):
        h, states = model_outputs(model, pp, inputs, guess)
        r = ((z - h[None]) / layout.sigma).ravel()
        return r, 0.5 * float(np.sum(w * r * r)), states

    r, f, states = evaluate(p, None)
    lam = lam0
    g_norm = np.inf
    polish = 0
    for it in range(max_iter + 1):
        J = _jacobian_from_blocks(output_jacobians(model, p, inputs, states), layout, tensor.n_m)
        _check_rank(J, w)
        wJ = w[:, None] * J
        A = J.T @ wJ
        g = wJ.T @ r
        g_norm = float(np.linalg.norm(g))
        gn_step = np.linalg.solve(A, -g)
        decrease = -0.5 * g @ gn_step
        if g_norm <= tol_grad * max(1.0, f) and decrease <= TOL_DECREASE * max(1.0, f):
            return Estimate(p, f, g_norm, it, True, J=J, stop_reason="gradient")
        if it == max_iter:
            break
        dA = np.diag(A).copy()
        if decrease <= 1e-12 * max(1.0, f):
            # f can no longer resolve progress; take plain Gauss-Newton steps
            # on the stationarity condition instead of testing f
            polish += 1
            if polish > MAX_POLISH:
                return Estimate(p, f, g_norm, it, True, J=J, stop_reason="round-off")
            p_try = p + gn_step
            if bounds is None or (np.all(p_try > lo) and np.all(p_try < hi)):
                p = p_try
                r, f, states = evaluate(p, states[0])
                continue
        while True:
            step = np.linalg.solve(A + lam * np.diag(dA), -g)
            p_try = p + step
            ok = bounds is None or (np.all(p_try > lo) and np.all(p_try < hi))
            if ok:
                try:
                    r_try, f_try, st_try = evaluate(p_try, states[0])
                except NonConvergence:
                    ok = False
            if ok and f_try < f:
                p, r, f, states = p_try, r_try, f_try, st_try
                lam = max(lam / 10.0, 1e-12)
                break
            lam *= 10.0
            if lam > 1e16:
                return Estimate(p, f, g_norm, it, False, J=J, stop_reason="damping limit")
    raise NonConvergence(
        f"identification did not converge in {max_iter} iterations (|g| = {g_norm:.3e})"
    )


def calibrate(model, layout, tensor, p0, *, bounds=None, second_order=True, **kwargs):
    """Identify ``p`` and attach ``J``, ``S`` and the covariance ``C``."""
    est = identify_parameters(model, layout, tensor, p0, bounds=bounds, **kwargs)
    if not est.converged:
        raise NonConvergence(f"identification stalled ({est.stop_reason})")
    J = est.J
    S = assemble_second_order(model, layout, tensor, est.p) if second_order else None
    est.S = S
    est.C = covariance(J, S, layout)
    return est
