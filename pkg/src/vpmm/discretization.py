"""Spatial models: a homogeneous point model and a bilinear-quad 2D mesh.

Both models expose the same small interface used by the gradient system:

``energy(t, phi, P)``
    the stored energy ``sum_q w_q [W(grad phi P^-1) + K(P) + |grad P|^qG/qG
    + eta W~(grad phi)] - <l(t), phi>`` (``INFINITE`` outside the domain);
``grad_phi(t, phi, P)`` / ``grad_P(t, phi, P)``
    exact derivatives of that discrete sum with respect to the nodal
    unknowns.

Plastic fields are stacks ``(n_nodes, d, d)``.  Energy integrals use
Gauss points; dissipation integrals and L^p norms use the nodal
(vertex) rule with the lumped weights ``nodal_weights``, which makes the
discrete dual dissipation separable node by node.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import constitutive as cm
from . import tensor as tc
from .errors import INFINITE, ConfigError, DimensionMismatch, InfiniteEnergyState


@dataclass(frozen=True)
class Material:
    exponents: cm.ExponentSet
    hardening: cm.HardeningParams
    elastic: cm.ElasticParams
    regularizer: cm.RegularizerParams = field(default_factory=cm.RegularizerParams)

    @property
    def q_F(self):
        return self.exponents.q_F

    @property
    def q_G(self):
        return self.exponents.q_G

    @property
    def p(self):
        return self.exponents.p

    @classmethod
    def example(cls, d=2, c=(1.0, 1.0, 1.0, 1.0), eta_W=2.0, p=2.0):
        """The exponent family ``q_phi = d+1, q_F = q_P = q_G = 2d+2, q_gamma = 4d+4``."""
        q = 2 * d + 2
        ex = cm.ExponentSet(q_phi=d + 1, q_F=q, q_P=q, q_G=q, q_gamma=4 * d + 4, p=p, d=d)
        return cls(
            ex.validate(),
            cm.HardeningParams(c[0], c[1], ex.q_P, ex.q_gamma),
            cm.ElasticParams(c[2], c[3], eta_W),
        )


@dataclass(frozen=True)
class LoadSpec:
    """Dead load ``l(t) = s(t) l0``.

    ``body_force`` (a vector) drives the FE model through ``int f . phi``;
    ``traction`` (a matrix ``L0``) drives the point model through
    ``|Omega| L0 : grad phi``, the work of boundary tractions ``L0 n`` on a
    homogeneous deformation.
    """

    shape: str = "constant"
    omega: float = 1.0
    body_force: tuple = ()
    traction: tuple = ()

    def __post_init__(self):
        if self.shape not in ("constant", "ramp", "sine"):
            raise ConfigError(f"unknown load shape {self.shape!r}")

    def scale(self, t):
        if self.shape == "constant":
            return 1.0
        if self.shape == "ramp":
            return float(t)
        return float(np.sin(self.omega * t))

    def scale_rate(self, t):
        if self.shape == "constant":
            return 0.0
        if self.shape == "ramp":
            return 1.0
        return float(self.omega * np.cos(self.omega * t))

    def force(self, d):
        return np.zeros(d) if len(self.body_force) == 0 else np.asarray(self.body_force, float)

    def traction_matrix(self, d):
        return np.zeros((d, d)) if len(self.traction) == 0 else np.asarray(self.traction, float)


@dataclass
class Mesh:
    mode: str
    nodes: np.ndarray
    elements: np.ndarray
    qp_shape: np.ndarray  # (n_qp, 4) shape values at reference Gauss points
    qp_grad: np.ndarray  # (n_qp, 4, 2) physical shape gradients
    qp_weight: np.ndarray  # (n_el, n_qp)
    nodal_weights: np.ndarray  # (n_nodes,) lumped
    dirichlet_nodes: np.ndarray
    volume: float

    @property
    def n_nodes(self):
        return len(self.nodes)


def point_mesh(volume: float = 1.0) -> Mesh:
    return Mesh(
        mode="point",
        nodes=np.zeros((1, 2)),
        elements=np.zeros((1, 1), dtype=int),
        qp_shape=np.ones((1, 1)),
        qp_grad=np.zeros((1, 1, 2)),
        qp_weight=np.array([[volume]]),
        nodal_weights=np.array([volume]),
        dirichlet_nodes=np.array([], dtype=int),
        volume=float(volume),
    )


def structured_quad_mesh(n: int = 4, size=(1.0, 1.0), dirichlet: str = "left") -> Mesh:
    """``n x n`` bilinear quads on ``[0, Lx] x [0, Ly]`` with 2x2 Gauss points."""
    if n < 1:
        raise ConfigError("mesh needs n >= 1")
    Lx, Ly = map(float, size)
    hx, hy = Lx / n, Ly / n
    xs, ys = np.linspace(0, Lx, n + 1), np.linspace(0, Ly, n + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    elems = []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            elems.append([a, a + 1, a + n + 2, a + n + 1])
    elems = np.array(elems)
    g = 1.0 / np.sqrt(3.0)
    ref = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)
    gauss = np.array([[-g, -g], [g, -g], [g, g], [-g, g]])
    shape = 0.25 * (1 + gauss[:, None, 0] * ref[None, :, 0]) * (1 + gauss[:, None, 1] * ref[None, :, 1])
    dxi = 0.25 * ref[None, :, 0] * (1 + gauss[:, None, 1] * ref[None, :, 1])
    deta = 0.25 * ref[None, :, 1] * (1 + gauss[:, None, 0] * ref[None, :, 0])
    grad = np.stack([dxi * 2.0 / hx, deta * 2.0 / hy], axis=-1)
    weight = np.full((len(elems), 4), hx * hy / 4.0)
    lumped = np.zeros(len(nodes))
    np.add.at(lumped, elems, np.full(elems.shape, hx * hy / 4.0))
    tol = 1e-12 * max(Lx, Ly)
    if dirichlet == "left":
        dn = np.nonzero(nodes[:, 0] < tol)[0]
    elif dirichlet == "full":
        on = (nodes[:, 0] < tol) | (nodes[:, 0] > Lx - tol) | (nodes[:, 1] < tol) | (nodes[:, 1] > Ly - tol)
        dn = np.nonzero(on)[0]
    else:
        raise ConfigError(f"fem2d dirichlet must be 'left' or 'full', got {dirichlet!r}")
    return Mesh("fem2d", nodes, elems, shape, grad, weight, lumped, dn, Lx * Ly)


class _ModelBase:
    """Shared plumbing for the two spatial models."""

    mesh: Mesh
    material: Material
    load: LoadSpec
    eta: float

    @property
    def dim(self):
        return self.material.exponents.d

    @property
    def nodal_weights(self):
        return self.mesh.nodal_weights

    @property
    def n_nodes(self):
        return self.mesh.n_nodes

    def with_eta(self, eta: float):
        if eta < 0:
            raise ConfigError("regularization weight eta must be >= 0")
        return replace(self, eta=float(eta))

    def constant_field(self, P0) -> np.ndarray:
        P0 = tc.as_mat(P0, self.dim)
        return np.repeat(P0[None], self.n_nodes, axis=0)

    def check_P(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        if P.shape != (self.n_nodes, self.dim, self.dim):
            raise DimensionMismatch(f"plastic field shape {P.shape} != {(self.n_nodes, self.dim, self.dim)}")
        return P

    def min_det(self, P) -> float:
        """Smallest determinant over nodes and quadrature points."""
        P = self.check_P(P)
        return float(min(tc.det(P).min(), tc.det(self.P_at_qp(P)).min()))

    def admissible(self, P) -> bool:
        return self.min_det(P) > 0

    def _finite_or_raise(self, t, phi, P):
        if self.energy(t, phi, P) is INFINITE:
            raise InfiniteEnergyState("derivative requested at an infinite-energy state")

    def dissipation_field(self, P, V, dp: cm.DissipationParams):
        """Nodal densities ``R(V_a P_a^-1)``."""
        Pinv = tc.inverse_glplus(P)
        return cm.dissipation_values(V @ Pinv, dp.sigma_yield, dp.nu, dp.p)

    def lp_norm(self, field, p: float) -> float:
        return lp_norm(field, p, self.nodal_weights)


def lp_norm(field, p: float, weights) -> float:
    """Discrete L^p norm ``(sum_a w_a |field_a|^p)^(1/p)`` with Frobenius pointwise norm."""
    field = np.asarray(field, dtype=float)
    pointwise = np.sqrt(np.sum(field.reshape(len(weights), -1) ** 2, axis=1))
    return float(np.sum(weights * pointwise**p) ** (1.0 / p))


@dataclass
class PointModel(_ModelBase):
    """Spatially homogeneous specialisation: one point of weight ``|Omega|``.

    The deformation is affine, ``phi(x) = F x``, and is represented by its
    gradient ``F``.  With ``pinned=True`` ``F`` is fixed at ``F0`` (affine
    Dirichlet data on the whole boundary); otherwise ``F`` is free and the
    load acts through the traction work ``|Omega| s(t) L0 : F``.
    """

    material: Material
    load: LoadSpec = field(default_factory=LoadSpec)
    volume: float = 1.0
    pinned: bool = False
    F0: np.ndarray = None
    eta: float = 0.0
    mesh: Mesh = None

    def __post_init__(self):
        d = self.dim
        self.F0 = np.eye(d) if self.F0 is None else tc.as_mat(self.F0, d)
        self.mesh = point_mesh(self.volume)
        if np.any(self.load.force(d) != 0):
            raise ConfigError("point mode takes a traction load, not a body force")

    # geometry -------------------------------------------------------------
    def P_at_qp(self, P):
        return P

    def reference_phi(self):
        return self.F0.copy()

    def free_mask(self, phi_shape=None):
        return np.full((self.dim, self.dim), not self.pinned)

    def apply_dirichlet(self, phi):
        return self.F0.copy() if self.pinned else np.asarray(phi, float).copy()

    def deformation_gradient(self, phi):
        return np.asarray(phi, float)[None]

    # loading --------------------------------------------------------------
    def load_pairing(self, t, phi):
        return self.volume * self.load.scale(t) * float(np.sum(self.load.traction_matrix(self.dim) * phi))

    def load_rate_pairing(self, t, phi):
        return self.volume * self.load.scale_rate(t) * float(np.sum(self.load.traction_matrix(self.dim) * phi))

    def load_increment_pairing(self, s, t, phi):
        dl = self.load.scale(t) - self.load.scale(s)
        return self.volume * dl * float(np.sum(self.load.traction_matrix(self.dim) * phi))

    def load_norm(self, t, rate=False):
        s = self.load.scale_rate(t) if rate else self.load.scale(t)
        return abs(s) * self.volume * float(tc.frobenius_norm(self.load.traction_matrix(self.dim)))

    # energy ---------------------------------------------------------------
    def energy(self, t, phi, P):
        F = np.asarray(phi, float)
        P = self.check_P(P)[0]
        mat = self.material
        if not (tc.det(P) > 0 and tc.det(F) > 0):
            return INFINITE
        Fe = F @ tc.inverse_glplus(P, det_floor=0.0)
        dens = cm.elastic_values(Fe, mat.elastic, mat.q_F) + cm.hardening_values(P, mat.hardening)
        if self.eta > 0:
            dens = dens + self.eta * cm.regularizer_values(F, mat.regularizer, mat.p)
        if not np.isfinite(dens):
            return INFINITE
        return float(self.volume * dens - self.load_pairing(t, F))

    def grad_phi(self, t, phi, P):
        self._finite_or_raise(t, phi, P)
        if self.pinned:
            return np.zeros((self.dim, self.dim))
        F = np.asarray(phi, float)
        P = self.check_P(P)[0]
        mat = self.material
        Pinv = tc.inverse_glplus(P, det_floor=0.0)
        S = cm.d_elastic_W(F @ Pinv, mat.elastic, mat.q_F) @ Pinv.T
        if self.eta > 0:
            S = S + self.eta * cm.d_regularizer_Wtilde(F, mat.regularizer, mat.p)
        return self.volume * (S - self.load.scale(t) * self.load.traction_matrix(self.dim))

    def grad_P(self, t, phi, P, split=False):
        self._finite_or_raise(t, phi, P)
        F = np.asarray(phi, float)
        P = self.check_P(P)
        mat = self.material
        dk = self.volume * cm.d_hardening_K(P, mat.hardening)
        back = -self.volume * cm.backstress_B(F[None], P, mat.elastic, mat.q_F)
        lap = np.zeros_like(P)
        total = dk + back + lap
        if split:
            return total, {"qG_laplacian": lap, "DK": dk, "backstress": back}
        return total


@dataclass
class FEModel(_ModelBase):
    """Bilinear quads on a structured grid with nodal ``phi`` and ``P``."""

    material: Material
    load: LoadSpec = field(default_factory=LoadSpec)
    n: int = 4
    size: tuple = (1.0, 1.0)
    dirichlet: str = "left"
    F0: np.ndarray = None
    eta: float = 0.0
    mesh: Mesh = None

    def __post_init__(self):
        if self.dim != 2:
            raise ConfigError("fem2d mode requires d = 2")
        self.F0 = np.eye(2) if self.F0 is None else tc.as_mat(self.F0, 2)
        self.mesh = structured_quad_mesh(self.n, self.size, self.dirichlet)
        if np.any(self.load.traction_matrix(2) != 0):
            raise ConfigError("fem2d mode takes a body force, not a traction")
        self._free = np.ones((self.n_nodes, 2), dtype=bool)
        self._free[self.mesh.dirichlet_nodes] = False
        self._phi_dir = self.mesh.nodes @ self.F0.T

    # geometry -------------------------------------------------------------
    def P_at_qp(self, P):
        P = np.asarray(P, float)
        return np.einsum("qa,eaij->eqij", self.mesh.qp_shape, P[self.mesh.elements])

    def P_grad_at_qp(self, P):
        P = np.asarray(P, float)
        # shape gradients sum to zero; differencing against the first vertex
        # makes the gradient of a constant field exactly zero
        Pe = P[self.mesh.elements]
        Pe = Pe - Pe[:, :1]
        return np.einsum("eaij,qak->eqijk", Pe, self.mesh.qp_grad)

    def deformation_gradient(self, phi):
        phi = np.asarray(phi, float)
        return np.einsum("eai,qaj->eqij", phi[self.mesh.elements], self.mesh.qp_grad)

    def reference_phi(self):
        return self._phi_dir.copy()

    def free_mask(self, phi_shape=None):
        return self._free.copy()

    def apply_dirichlet(self, phi):
        phi = np.array(phi, dtype=float)
        phi[~self._free] = self._phi_dir[~self._free]
        return phi

    def _scatter(self, local):
        out = np.zeros((self.n_nodes,) + local.shape[2:])
        np.add.at(out, self.mesh.elements, local)
        return out

    # loading --------------------------------------------------------------
    def _nodal_load(self, s):
        return s * self.nodal_weights[:, None] * self.load.force(2)[None, :]

    def load_pairing(self, t, phi):
        return float(np.sum(self._nodal_load(self.load.scale(t)) * phi))

    def load_rate_pairing(self, t, phi):
        return float(np.sum(self._nodal_load(self.load.scale_rate(t)) * phi))

    def load_increment_pairing(self, s, t, phi):
        return float(np.sum(self._nodal_load(self.load.scale(t) - self.load.scale(s)) * phi))

    def load_norm(self, t, rate=False):
        """Euclidean norm of the nodal load vector (dual to the nodal Euclidean norm of phi)."""
        s = self.load.scale_rate(t) if rate else self.load.scale(t)
        return float(np.linalg.norm(self._nodal_load(s)))

    # energy ---------------------------------------------------------------
    def _kinematics(self, phi, P):
        F = self.deformation_gradient(phi)
        Pq = self.P_at_qp(P)
        return F, Pq

    def energy(self, t, phi, P):
        phi = np.asarray(phi, float)
        P = self.check_P(P)
        mat = self.material
        F, Pq = self._kinematics(phi, P)
        dPq = tc.det(Pq)
        if np.any(~(dPq > 0)) or np.any(~(tc.det(P) > 0)) or np.any(~(tc.det(F) > 0)):
            return INFINITE
        Fe = F @ np.swapaxes(tc.inv_T(Pq), -1, -2)
        dens = cm.elastic_values(Fe, mat.elastic, mat.q_F) + cm.hardening_values(Pq, mat.hardening)
        gval, _ = cm.gradient_power_term(self.P_grad_at_qp(P), mat.q_G)
        dens = dens + gval
        if self.eta > 0:
            dens = dens + self.eta * cm.regularizer_values(F, mat.regularizer, mat.p)
        if not np.all(np.isfinite(dens)):
            return INFINITE
        return float(np.sum(self.mesh.qp_weight * dens) - self.load_pairing(t, phi))

    def grad_phi(self, t, phi, P):
        self._finite_or_raise(t, phi, P)
        phi = np.asarray(phi, float)
        mat = self.material
        F, Pq = self._kinematics(phi, P)
        PinvT = tc.inv_T(Pq)
        S = cm.d_elastic_W(F @ np.swapaxes(PinvT, -1, -2), mat.elastic, mat.q_F) @ PinvT
        if self.eta > 0:
            S = S + self.eta * cm.d_regularizer_Wtilde(F, mat.regularizer, mat.p)
        local = np.einsum("eq,eqij,qaj->eai", self.mesh.qp_weight, S, self.mesh.qp_grad)
        g = self._scatter(local) - self._nodal_load(self.load.scale(t))
        g[~self._free] = 0.0
        return g

    def grad_P(self, t, phi, P, split=False):
        self._finite_or_raise(t, phi, P)
        phi = np.asarray(phi, float)
        P = self.check_P(P)
        mat = self.material
        F, Pq = self._kinematics(phi, P)
        w = self.mesh.qp_weight
        N = self.mesh.qp_shape
        dk_q = cm.d_hardening_K(Pq, mat.hardening)
        back_q = -cm.backstress_B(F, Pq, mat.elastic, mat.q_F)
        _, g3 = cm.gradient_power_term(self.P_grad_at_qp(P), mat.q_G)
        dk = self._scatter(np.einsum("eq,eqij,qa->eaij", w, dk_q, N))
        back = self._scatter(np.einsum("eq,eqij,qa->eaij", w, back_q, N))
        lap = self._scatter(np.einsum("eq,eqijk,qak->eaij", w, g3, self.mesh.qp_grad))
        total = lap + dk + back
        if split:
            return total, {"qG_laplacian": lap, "DK": dk, "backstress": back}
        return total
