"""Planar lumped-parameter linkage: nodes, elements and the quasi-static model.

Each node carries a subset of the degrees of freedom ``x``, ``y`` and ``r``
(rotation); a node with no free DOFs is fixed to the ground. Element
stiffnesses are either numbers or names of identifiable parameters.

The state is the vector of free nodal displacements, and the state
equation is the gradient of the elastic energy minus the applied load,

    E(y, p, q) = dU/dy (y, p) + g - (q_P - q_fric) b,

with input ``q = (q_P, q_fric)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from ..core import StateEquationModel
from ..errors import InvalidTopology

G0 = 9.81
_DOFS = "xyr"

Stiffness = Union[float, str]


@dataclass(frozen=True)
class Node:
    name: str
    x: float
    y: float
    dofs: str = ""
    mass: float = 0.0

    def __post_init__(self):
        if any(d not in _DOFS for d in self.dofs) or len(set(self.dofs)) != len(self.dofs):
            raise InvalidTopology(f"node {self.name}: dofs must be a subset of 'xyr'")


def _check_k(value, what):
    if isinstance(value, str):
        return
    if not value > 0:
        raise InvalidTopology(f"{what} must be positive, got {value}")


@dataclass(frozen=True)
class BarElement:
    """Axial spring between two nodes, ``U = 1/2 k (l - L)^2``.

    With ``nonlinear=False`` the elongation is linearized about the rest
    geometry, ``U = 1/2 k (d . (u2 - u1))^2``. Masses only matter with
    gravity switched on; they are lumped at the end nodes.
    """

    nodes: tuple
    k: Stiffness
    m1: float = 0.0
    m2: float = 0.0
    nonlinear: Optional[bool] = None

    def __post_init__(self):
        _check_k(self.k, "bar stiffness")
        if self.m1 < 0 or self.m2 < 0:
            raise InvalidTopology("bar masses must be non-negative")


@dataclass(frozen=True)
class BeamElement:
    """Lever made of two flat beam elements over three nodes.

    Each element couples (axial, transverse, rotation) at its two ends
    through an axial stiffness ``k_alpha`` and a bending stiffness
    ``k_beta`` acting on ``eta_1 + l psi_1 - eta_2 + l psi_2``. Element
    length ``l`` defaults to the node spacing.
    """

    nodes: tuple
    k_alpha: float
    k_beta: float
    length: Optional[float] = None
    mass: float = 0.0

    def __post_init__(self):
        if len(self.nodes) != 3:
            raise InvalidTopology("a beam connects exactly three nodes")
        _check_k(self.k_alpha, "k_alpha")
        _check_k(self.k_beta, "k_beta")
        if self.length is not None and not self.length > 0:
            raise InvalidTopology("beam length must be positive")

    @property
    def lumped_masses(self):
        return (self.mass / 4, self.mass / 2, self.mass / 4)


@dataclass(frozen=True)
class JointElement:
    """Bearing spring ``U = 1/2 k |u2 - u1|^2`` on the translational DOFs."""

    nodes: tuple
    k: Stiffness

    def __post_init__(self):
        _check_k(self.k, "joint stiffness")


@dataclass(frozen=True)
class SupportElement:
    """Frame compliance: spring from one nodal DOF to the ground."""

    node: str
    dof: str
    k: Stiffness

    def __post_init__(self):
        _check_k(self.k, "support stiffness")
        if self.dof not in _DOFS:
            raise InvalidTopology(f"support dof must be one of 'xyr', got {self.dof!r}")


def beam_element_matrix(k_alpha, k_beta, length):
    """Local 6x6 stiffness on (xi1, eta1, psi1, xi2, eta2, psi2)."""
    K = np.zeros((6, 6))
    axial = np.array([1.0, -1.0])
    K[np.ix_([0, 3], [0, 3])] = k_alpha * np.outer(axial, axial)
    a = np.array([1.0, length, -1.0, length])
    K[np.ix_([1, 2, 4, 5], [1, 2, 4, 5])] = k_beta * np.outer(a, a)
    return K


def _rotation(c, s):
    R = np.zeros((6, 6))
    block = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    R[:3, :3] = block
    R[3:, 3:] = block
    return R


@dataclass(frozen=True)
class Sensor:
    name: str
    node: str
    dof: str
    sigma: float = 1.0


@dataclass
class PressSurrogate:
    nodes: list
    elements: list
    parameters: dict
    load: tuple
    sensors: list
    friction: Optional[object] = None
    geometric_nonlinearity: bool = False
    gravity: bool = False
    name: str = "press"
    _dof_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        names = [n.name for n in self.nodes]
        if len(set(names)) != len(names):
            raise InvalidTopology("node names must be unique")
        self._nodes = {n.name: n for n in self.nodes}
        self._dof_index = {}
        for n in self.nodes:
            for d in n.dofs:
                self._dof_index[(n.name, d)] = len(self._dof_index)
        for el in self.elements:
            for nm in _element_nodes(el):
                if nm not in self._nodes:
                    raise InvalidTopology(f"element refers to unknown node {nm!r}")
            for k in _element_stiffnesses(el):
                if isinstance(k, str) and k not in self.parameters:
                    raise InvalidTopology(f"unknown parameter {k!r}")
        if tuple(self.load) not in self._dof_index:
            raise InvalidTopology(f"load DOF {self.load} is not free")
        for s in self.sensors:
            if (s.node, s.dof) not in self._dof_index:
                raise InvalidTopology(f"sensor {s.name} observes a fixed DOF")
        used = {k for el in self.elements for k in _element_stiffnesses(el) if isinstance(k, str)}
        if used != set(self.parameters):
            raise InvalidTopology(f"parameters {sorted(set(self.parameters) - used)} are unused")

    @property
    def d_y(self):
        return len(self._dof_index)

    @property
    def parameter_names(self):
        return tuple(self.parameters)

    @property
    def nominal(self):
        return np.array([self.parameters[k] for k in self.parameters], dtype=float)

    def dof(self, node, d):
        return self._dof_index[(node, d)]

    def node(self, name):
        return self._nodes[name]

    def sensor_sigmas(self):
        return np.array([s.sigma for s in self.sensors], dtype=float)

    def sensor_names(self):
        return tuple(s.name for s in self.sensors)


def _element_nodes(el):
    if isinstance(el, SupportElement):
        return (el.node,)
    return tuple(el.nodes)


def _element_stiffnesses(el):
    if isinstance(el, BeamElement):
        return (el.k_alpha, el.k_beta)
    return (el.k,)


class QuasiStaticModel(StateEquationModel):
    """State equation of a :class:`PressSurrogate` with analytic derivatives."""

    def __init__(self, surrogate: PressSurrogate):
        names = surrogate.parameter_names
        super().__init__(d_y=surrogate.d_y, n_p=len(names), d_q=2,
                         n_s=len(surrogate.sensors), name=surrogate.name)
        self.surrogate = surrogate
        self._pindex = {nm: i for i, nm in enumerate(names)}
        n = self.d_y
        self._K0 = np.zeros((n, n))
        self._Kp = np.zeros((self.n_p, n, n))
        self._bars = []
        for el in surrogate.elements:
            self._add(el)
        self._b = np.zeros(n)
        self._b[surrogate.dof(*surrogate.load)] = 1.0
        self._g = self._gravity() if surrogate.gravity else np.zeros(n)
        self._S = np.zeros((self.n_s, n))
        for row, s in enumerate(surrogate.sensors):
            self._S[row, surrogate.dof(s.node, s.dof)] = 1.0

    # -- assembly -----------------------------------------------------------------

    def _slots(self, node, dofs):
        sur = self.surrogate
        return [sur.dof(node, d) if (node, d) in sur._dof_index else -1 for d in dofs]

    def _scatter(self, k, idx, block):
        if isinstance(k, str):
            target, scale = self._Kp[self._pindex[k]], 1.0
        else:
            target, scale = self._K0, float(k)
        for a, ia in enumerate(idx):
            if ia < 0:
                continue
            for b, ib in enumerate(idx):
                if ib >= 0:
                    target[ia, ib] += scale * block[a, b]

    def _add(self, el):
        sur = self.surrogate
        if isinstance(el, SupportElement):
            idx = self._slots(el.node, el.dof)
            if idx[0] < 0:
                raise InvalidTopology(f"support on fixed DOF {el.node}.{el.dof}")
            self._scatter(el.k, idx, np.ones((1, 1)))
        elif isinstance(el, JointElement):
            idx = self._slots(el.nodes[0], "xy") + self._slots(el.nodes[1], "xy")
            B = np.hstack([-np.eye(2), np.eye(2)])
            self._scatter(el.k, idx, B.T @ B)
        elif isinstance(el, BarElement):
            n1, n2 = (sur.node(nm) for nm in el.nodes)
            rest = np.array([n2.x - n1.x, n2.y - n1.y])
            L = float(np.linalg.norm(rest))
            if L == 0:
                raise InvalidTopology("bar with zero length")
            idx = self._slots(n1.name, "xy") + self._slots(n2.name, "xy")
            nonlinear = sur.geometric_nonlinearity if el.nonlinear is None else el.nonlinear
            if nonlinear:
                self._bars.append((el.k, np.array(idx), rest, L))
            else:
                d = rest / L
                B = np.concatenate([-d, d])[None]
                self._scatter(el.k, idx, B.T @ B)
        elif isinstance(el, BeamElement):
            n1, n2, n3 = (sur.node(nm) for nm in el.nodes)
            for a, b in ((n1, n2), (n2, n3)):
                vec = np.array([b.x - a.x, b.y - a.y])
                span = float(np.linalg.norm(vec))
                if span == 0:
                    raise InvalidTopology("beam element with zero length")
                length = el.length if el.length is not None else span
                R = _rotation(*(vec / span))
                Kg = R.T @ beam_element_matrix(1.0, 0.0, length) @ R
                Kb = R.T @ beam_element_matrix(0.0, 1.0, length) @ R
                idx = self._slots(a.name, "xyr") + self._slots(b.name, "xyr")
                self._scatter(el.k_alpha, idx, Kg)
                self._scatter(el.k_beta, idx, Kb)
        else:
            raise InvalidTopology(f"unknown element type {type(el).__name__}")

    def _gravity(self):
        sur = self.surrogate
        g = np.zeros(self.d_y)

        def put(node, m):
            key = (node, "y")
            if key in sur._dof_index:
                g[sur._dof_index[key]] += m * G0
        for n in sur.nodes:
            put(n.name, n.mass)
        for el in sur.elements:
            if isinstance(el, BarElement):
                put(el.nodes[0], el.m1)
                put(el.nodes[1], el.m2)
            elif isinstance(el, BeamElement):
                for nm, m in zip(el.nodes, el.lumped_masses):
                    put(nm, m)
        return g

    # -- pieces -------------------------------------------------------------------

    def stiffness(self, p):
        """Linear part of the tangent stiffness ``K0 + sum p_l K_l``."""
        return self._K0 + np.tensordot(np.asarray(p, dtype=float), self._Kp, axes=1)

    def _k(self, k, p):
        return p[self._pindex[k]] if isinstance(k, str) else float(k)

    @staticmethod
    def _gather(y, idx):
        u = np.zeros(4)
        mask = idx >= 0
        u[mask] = y[idx[mask]]
        return u

    def _bar_state(self, y, idx, rest):
        u = self._gather(y, idx)
        delta = u[2:] - u[:2]
        v = rest + delta
        ell = float(np.linalg.norm(v))
        # elongation from the displacement itself, free of the l - L cancellation
        L = float(np.linalg.norm(rest))
        stretch = (2.0 * rest @ delta + delta @ delta) / (ell + L)
        return v, ell, stretch

    # -- state equation -------------------------------------------------------------

    def load_vector(self, q):
        q = np.atleast_1d(q)
        fric = q[1] if q.size > 1 else 0.0
        return (q[0] - fric) * self._b

    def residual(self, y, p, q):
        p = np.asarray(p, dtype=float)
        out = self.stiffness(p) @ y + self._g - self.load_vector(q)
        for k, idx, rest, L in self._bars:
            v, ell, stretch = self._bar_state(y, idx, rest)
            f = self._k(k, p) * stretch * v / ell
            self._add_vec(out, idx, np.concatenate([-f, f]))
        return out

    @staticmethod
    def _add_vec(out, idx, vals):
        for a, ia in enumerate(idx):
            if ia >= 0:
                out[ia] += vals[a]

    @staticmethod
    def _add_mat(out, idx, block):
        for a, ia in enumerate(idx):
            if ia < 0:
                continue
            for b, ib in enumerate(idx):
                if ib >= 0:
                    out[ia, ib] += block[a, b]

    @staticmethod
    def _bar_hessian(v, ell, L, stretch):
        # d2U/dDelta2 per unit stiffness, Delta = u2 - u1
        return np.eye(2) * (stretch / ell) + L * np.outer(v, v) / ell**3

    @staticmethod
    def _bar_third(v, ell, L):
        eye = np.eye(2)
        t = (np.einsum("ab,c->abc", eye, v) + np.einsum("ac,b->abc", eye, v)
             + np.einsum("bc,a->abc", eye, v)) * L / ell**3
        return t - 3.0 * L * np.einsum("a,b,c->abc", v, v, v) / ell**5

    _SIGN = np.array([-1.0, 1.0])

    def _expand2(self, m):
        # map a 2x2 block in Delta to the 4x4 block on (u1, u2)
        return np.kron(np.outer(self._SIGN, self._SIGN), m)

    def dE_dy(self, y, p, q):
        p = np.asarray(p, dtype=float)
        K = self.stiffness(p).copy()
        for k, idx, rest, L in self._bars:
            v, ell, stretch = self._bar_state(y, idx, rest)
            self._add_mat(K, idx, self._k(k, p) * self._expand2(self._bar_hessian(v, ell, L, stretch)))
        return K

    def dE_dp(self, y, p, q):
        out = np.einsum("lab,b->al", self._Kp, y)
        for k, idx, rest, L in self._bars:
            if not isinstance(k, str):
                continue
            v, ell, stretch = self._bar_state(y, idx, rest)
            f = stretch * v / ell
            col = np.zeros(self.d_y)
            self._add_vec(col, idx, np.concatenate([-f, f]))
            out[:, self._pindex[k]] += col
        return out

    def d2E_dyy(self, y, p, q):
        p = np.asarray(p, dtype=float)
        T = np.zeros((self.d_y,) * 3)
        for k, idx, rest, L in self._bars:
            v, ell, stretch = self._bar_state(y, idx, rest)
            t = self._k(k, p) * self._bar_third(v, ell, L)
            sign = np.array([-1.0, 1.0])
            full = np.einsum("i,j,l,abc->iajblc", sign, sign, sign, t).reshape(4, 4, 4)
            for a, ia in enumerate(idx):
                if ia < 0:
                    continue
                for b, ib in enumerate(idx):
                    if ib < 0:
                        continue
                    for c, ic in enumerate(idx):
                        if ic >= 0:
                            T[ia, ib, ic] += full[a, b, c]
        return T

    def d2E_dyp(self, y, p, q):
        out = np.transpose(self._Kp, (1, 2, 0)).copy()
        for k, idx, rest, L in self._bars:
            if not isinstance(k, str):
                continue
            v, ell, stretch = self._bar_state(y, idx, rest)
            block = np.zeros((self.d_y, self.d_y))
            self._add_mat(block, idx, self._expand2(self._bar_hessian(v, ell, L, stretch)))
            out[:, :, self._pindex[k]] += block
        return out

    def d2E_dpp(self, y, p, q):
        return np.zeros((self.d_y, self.n_p, self.n_p))

    # -- observation --------------------------------------------------------------

    def observe(self, y, p, q):
        return self._S @ y

    def dh_dy(self, y, p, q):
        return self._S.copy()

    def dh_dp(self, y, p, q):
        return np.zeros((self.n_s, self.n_p))

    def d2h_dyy(self, y, p, q):
        return np.zeros((self.n_s, self.d_y, self.d_y))

    def d2h_dyp(self, y, p, q):
        return np.zeros((self.n_s, self.d_y, self.n_p))

    def d2h_dpp(self, y, p, q):
        return np.zeros((self.n_s, self.n_p, self.n_p))

    def is_analytic(self, name):
        return True


def assemble_quasistatic(surrogate, p=None, q_P=None):
    """Build the quasi-static state equation of ``surrogate``.

    When ``p`` is given, the stiffnesses are checked for positivity and the
    tangent stiffness at rest for invertibility; a singular structure raises
    :class:`InvalidTopology`.
    """
    model = QuasiStaticModel(surrogate)
    p = surrogate.nominal if p is None else np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise ValueError("stiffness parameters must be strictly positive")
    K = model.dE_dy(np.zeros(model.d_y), p, np.zeros(2))
    cond = np.linalg.cond(K)
    if not np.isfinite(cond) or cond > model.cond_cap:
        raise InvalidTopology(f"assembled stiffness is singular (condition {cond:.3e})")
    if q_P is not None and not np.isfinite(q_P):
        raise ValueError("process force must be finite")
    return model


def assembled_beam_matrix(k_alpha, k_beta, length):
    """Free-free 9x9 stiffness of a straight three-node lever along x."""
    K = np.zeros((9, 9))
    Ke = beam_element_matrix(k_alpha, k_beta, length)
    for start in (0, 3):
        K[start:start + 6, start:start + 6] += Ke
    return K


# -- configuration ----------------------------------------------------------------


def surrogate_from_dict(cfg, friction=None):
    """Build a :class:`PressSurrogate` from a JSON-style dictionary."""
    try:
        nodes = [Node(n["name"], float(n["x"]), float(n["y"]), n.get("dofs", ""),
                      float(n.get("mass", 0.0))) for n in cfg["nodes"]]
        elements = []
        for e in cfg["elements"]:
            kind = e["type"]
            if kind == "bar":
                elements.append(BarElement(tuple(e["nodes"]), _stiff(e["k"]),
                                           float(e.get("m1", 0.0)), float(e.get("m2", 0.0)),
                                           e.get("nonlinear")))
            elif kind == "beam":
                elements.append(BeamElement(tuple(e["nodes"]), float(e["k_alpha"]),
                                            float(e["k_beta"]), e.get("length"),
                                            float(e.get("mass", 0.0))))
            elif kind == "joint":
                elements.append(JointElement(tuple(e["nodes"]), _stiff(e["k"])))
            elif kind == "support":
                elements.append(SupportElement(e["node"], e["dof"], _stiff(e["k"])))
            else:
                raise InvalidTopology(f"unknown element type {kind!r}")
        sensors = [Sensor(s["name"], s["node"], s["dof"], float(s.get("sigma", 1.0)))
                   for s in cfg["sensors"]]
        return PressSurrogate(nodes, elements, {k: float(v) for k, v in cfg["parameters"].items()},
                              (cfg["load"]["node"], cfg["load"]["dof"]), sensors, friction,
                              bool(cfg.get("geometric_nonlinearity", False)),
                              bool(cfg.get("gravity", False)), cfg.get("name", "press"))
    except (KeyError, TypeError) as exc:
        raise InvalidTopology(f"malformed surrogate description: {exc!r}") from exc


def _stiff(v):
    return v if isinstance(v, str) else float(v)


# Sensor standard deviations: repetition and internal parts combined by
# root sum of squares, in metres.
DEFAULT_SIGMA = (1.518e-05, 4.895e-06, 3.904e-06)

DEFAULT_CONFIG = {
    "name": "lever-press",
    "nodes": [
        {"name": "B0", "x": 0.0, "y": 0.0, "dofs": "xyr"},
        {"name": "M", "x": 0.25, "y": 0.25, "dofs": "xyr"},
        {"name": "F", "x": 0.5, "y": 0.5, "dofs": "xyr"},
        {"name": "G5", "x": 0.9, "y": 0.1},
        {"name": "D", "x": 0.25, "y": 0.25, "dofs": "xy"},
        {"name": "R", "x": 0.25, "y": -0.35, "dofs": "y"},
    ],
    "elements": [
        {"type": "beam", "nodes": ["B0", "M", "F"], "k_alpha": 4e8, "k_beta": 1e7},
        {"type": "support", "node": "B0", "dof": "x", "k": 6e7},
        {"type": "support", "node": "B0", "dof": "y", "k": 2.5e7},
        {"type": "support", "node": "B0", "dof": "r", "k": 4e5},
        {"type": "support", "node": "F", "dof": "r", "k": 4e5},
        {"type": "bar", "nodes": ["F", "G5"], "k": "k5"},
        {"type": "joint", "nodes": ["M", "D"], "k": 5e7},
        {"type": "bar", "nodes": ["D", "R"], "k": "k7"},
        {"type": "support", "node": "R", "dof": "y", "k": 5e4},
    ],
    "parameters": {"k5": 5e5, "k7": 1e6},
    "load": {"node": "R", "dof": "y"},
    "sensors": [
        {"name": "R_y", "node": "R", "dof": "y", "sigma": DEFAULT_SIGMA[0]},
        {"name": "F_x", "node": "F", "dof": "x", "sigma": DEFAULT_SIGMA[1]},
        {"name": "B0_y", "node": "B0", "dof": "y", "sigma": DEFAULT_SIGMA[2]},
    ],
    "geometric_nonlinearity": False,
    "gravity": False,
}


def default_surrogate(geometric_nonlinearity=False, friction=None):
    cfg = dict(DEFAULT_CONFIG, geometric_nonlinearity=geometric_nonlinearity)
    return surrogate_from_dict(cfg, friction)
