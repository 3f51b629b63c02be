"""The generalized gradient system built on a spatial model.

The reduced energy ``E(t, P)`` minimises the stored energy over the
deformation; its marginal subdifferential is represented by the
P-derivative of the stored energy at the computed minimiser.  Only one
(deterministic, warm-started) local minimiser is tracked.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import constitutive as cm
from . import tensor as tc
from .errors import INFINITE, InnerSolverDiverged

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class ReducedEnergyResult:
    value: float
    phi: np.ndarray
    converged: bool
    iterations: int
    grad_norm: float


@dataclass(frozen=True)
class SubdiffSelection:
    """Selected element of the marginal subdifferential.

    ``Xi`` is a nodal density: the nodal P-gradient divided by the lumped
    weights, so that ``sum_a w_a Xi_a : V_a`` is the exact directional
    derivative.  ``Xi`` is by construction the sum of the three stored
    components.
    """

    Xi: np.ndarray
    phi_star: np.ndarray
    components: dict
    grad: np.ndarray
    energy: float
    grad_norm: float


@dataclass
class _HessianCache:
    H: np.ndarray = None
    uses: int = 0


def _fd_hessian(grad, x, g0):
    n = x.size
    H = np.empty((n, n))
    for i in range(n):
        h = np.sqrt(_EPS) * max(1.0, abs(x[i]))
        xp = x.copy()
        xp[i] += h
        gp = grad(xp)
        if gp is None:
            xp[i] = x[i] - h
            gp = grad(xp)
            H[:, i] = (g0 - gp) / h
        else:
            H[:, i] = (gp - g0) / h
    return 0.5 * (H + H.T)


def _newton_direction(H, g):
    n = len(g)
    scale = max(np.max(np.abs(np.diag(H))), 1e-12)
    mu = 0.0
    for _ in range(60):
        try:
            L = np.linalg.cholesky(H + mu * np.eye(n))
            y = np.linalg.solve(L, -g)
            return np.linalg.solve(L.T, y)
        except np.linalg.LinAlgError:
            mu = max(2.0 * mu, 1e-10 * scale)
    return -g / scale


def minimize_smooth(f, grad, x0, tol, max_iter=500, cache=None):
    """Damped Newton descent with finite-difference Hessians of ``grad``.

    ``f`` may return INFINITE; such trial points are rejected by the
    backtracking search.  Steps are accepted on Armijo decrease or, once
    energy differences are at rounding level, on gradient decrease with an
    energy change within a few ulps.  The Hessian is refreshed only when
    the previous one stops giving fast gradient reduction.

    Returns ``(x, f(x), |grad|, iterations, converged)``.
    """
    cache = cache if cache is not None else _HessianCache()
    x = np.array(x0, dtype=float)
    fx = f(x)
    if fx is INFINITE:
        raise InnerSolverDiverged("initial deformation has infinite energy")
    g = grad(x)
    gn = float(np.linalg.norm(g))
    it = 0
    while gn > tol and it < max_iter:
        it += 1
        if cache.H is None or cache.H.shape[0] != x.size:
            cache.H = _fd_hessian(grad, x, g)
        d = _newton_direction(cache.H, g)
        slope = float(g @ d)
        if slope >= 0:
            cache.H = _fd_hessian(grad, x, g)
            d = _newton_direction(cache.H, g)
            slope = float(g @ d)
            if slope >= 0:
                d, slope = -g, -gn * gn
        alpha, accepted = 1.0, False
        noise = 16 * _EPS * (abs(fx) + 1.0)
        for _ in range(60):
            xn = x + alpha * d
            fn = f(xn)
            if fn is not INFINITE:
                if fn <= fx + 1e-4 * alpha * slope:
                    accepted = True
                elif fn <= fx + noise:
                    gtrial = grad(xn)
                    if np.linalg.norm(gtrial) < gn:
                        accepted = True
                if accepted:
                    break
            alpha *= 0.5
        if not accepted:
            if cache.uses > 0:
                # stale curvature; retry with a fresh Hessian
                cache.H, cache.uses = None, 0
                continue
            break
        gnew = grad(xn)
        gnew_n = float(np.linalg.norm(gnew))
        cache.uses += 1
        if alpha < 1.0 or gnew_n > 0.25 * gn:
            cache.H, cache.uses = None, 0
        x, fx, g, gn = xn, fn, gnew, gnew_n
    return x, fx, gn, it, gn <= tol


class ViscoplasticSystem:
    """Energy, dissipation, subdifferential selection and power of the model.

    Parameters
    ----------
    model : PointModel or FEModel
    dissipation : DissipationParams
    inner_tol : float, optional
        Gradient-norm stopping tolerance of the deformation solve (default
        1e-8 for the point model, 1e-6 on a mesh).
    max_inner_iter : int
    """

    def __init__(self, model, dissipation: cm.DissipationParams, inner_tol=None, max_inner_iter=500):
        self.model = model
        self.dissipation_params = dissipation
        if inner_tol is None:
            inner_tol = 1e-8 if model.mesh.mode == "point" else 1e-6
        self.inner_tol = float(inner_tol)
        self.max_inner_iter = int(max_inner_iter)
        self._warm = None
        self._cache = _HessianCache()

    @property
    def weights(self):
        return self.model.nodal_weights

    def with_eta(self, eta):
        return ViscoplasticSystem(
            self.model.with_eta(eta), self.dissipation_params, self.inner_tol, self.max_inner_iter
        )

    # ------------------------------------------------------------------
    # deformation solve
    # ------------------------------------------------------------------
    def inner_minimize(self, t, P, phi_init=None) -> ReducedEnergyResult:
        """Local minimiser of ``phi -> I(t, phi, P)`` started from ``phi_init``.

        Raises
        ------
        InnerSolverDiverged
            If the iteration cap is reached above tolerance.
        """
        model = self.model
        P = model.check_P(P)
        phi0 = model.apply_dirichlet(model.reference_phi() if phi_init is None else phi_init)
        mask = model.free_mask()
        if not mask.any():
            value = model.energy(t, phi0, P)
            return ReducedEnergyResult(value, phi0, True, 0, 0.0)

        def unpack(x):
            phi = phi0.copy()
            phi[mask] = x
            return phi

        def f(x):
            return model.energy(t, unpack(x), P)

        def grad(x):
            phi = unpack(x)
            if model.energy(t, phi, P) is INFINITE:
                return None
            return model.grad_phi(t, phi, P)[mask]

        if f(phi0[mask]) is INFINITE:
            raise InnerSolverDiverged("initial deformation has infinite energy")
        x, fx, gn, it, ok = minimize_smooth(
            f, grad, phi0[mask], self.inner_tol, self.max_inner_iter, self._cache
        )
        if not ok:
            raise InnerSolverDiverged(
                f"deformation solve stopped at |grad|={gn:.3e} after {it} iterations", gn, it
            )
        return ReducedEnergyResult(float(fx), unpack(x), True, it, gn)

    def reduced_energy(self, t, P, phi_init=None) -> ReducedEnergyResult:
        """``E(t, P)``, started from the better of the warm start and the reference map."""
        model = self.model
        candidates = [model.reference_phi()]
        for c in (phi_init, self._warm):
            if c is not None and np.shape(c) == np.shape(candidates[0]):
                candidates.append(model.apply_dirichlet(c))
        values = [model.energy(t, c, P) for c in candidates]
        best = min(range(len(values)), key=lambda i: values[i])
        res = self.inner_minimize(t, P, candidates[best])
        bound = min(values)
        if bound is not INFINITE and res.value > bound:
            raise InnerSolverDiverged("reduced energy exceeds a supplied candidate energy")
        self._warm = res.phi
        return res

    def energy(self, t, P):
        return self.reduced_energy(t, P).value

    def regularized_energy(self, t, P, eta, phi_init=None) -> ReducedEnergyResult:
        if eta == self.model.eta:
            return self.reduced_energy(t, P, phi_init)
        return self.with_eta(eta).reduced_energy(t, P, phi_init)

    # ------------------------------------------------------------------
    # subdifferential and power
    # ------------------------------------------------------------------
    def selection_at(self, t, P, phi) -> SubdiffSelection:
        """Selection ``D_P I(t, phi, P)`` at a given (assumed minimising) deformation."""
        grad, parts = self.model.grad_P(t, phi, P, split=True)
        w = self.weights[:, None, None]
        comps = {k: v / w for k, v in parts.items()}
        Xi = comps["qG_laplacian"] + comps["DK"] + comps["backstress"]
        gphi = self.model.grad_phi(t, phi, P)
        return SubdiffSelection(
            Xi=Xi,
            phi_star=np.array(phi),
            components=comps,
            grad=grad,
            energy=float(self.model.energy(t, phi, P)),
            grad_norm=float(np.linalg.norm(gphi)),
        )

    def subdifferential_select(self, t, P, phi_init=None) -> SubdiffSelection:
        res = self.reduced_energy(t, P, phi_init)
        return self.selection_at(t, P, res.phi)

    def power(self, t, P, sel: SubdiffSelection) -> float:
        """``-<l'(t), phi*>`` at the selected minimiser."""
        return -self.model.load_rate_pairing(t, sel.phi_star)

    # ------------------------------------------------------------------
    # dissipation
    # ------------------------------------------------------------------
    def _dp_fields(self):
        dp = self.dissipation_params
        return dp.sigma_yield, dp.nu, dp.p

    def dissipation(self, P, V) -> float:
        """``Psi_P(V) = sum_a w_a R(V_a P_a^-1)``."""
        s, nu, p = self._dp_fields()
        Pinv = tc.inverse_glplus(self.model.check_P(P))
        return float(np.sum(self.weights * cm.dissipation_values(np.asarray(V) @ Pinv, s, nu, p)))

    def dual_dissipation(self, P, Xi) -> float:
        """``Psi*_P(Xi) = sum_a w_a R*(Xi_a P_a^T)``."""
        s, nu, p = self._dp_fields()
        P = self.model.check_P(P)
        tc.inverse_glplus(P)
        Y = np.asarray(Xi) @ np.swapaxes(P, -1, -2)
        return float(np.sum(self.weights * cm.conjugate_values(Y, s, nu, p)))

    def fenchel_gap(self, P_prev, V, Xi) -> float:
        """``Psi(V) + Psi*(-Xi) + <Xi, V>`` with both potentials frozen at ``P_prev``."""
        pairing = float(np.sum(self.weights * tc.frobenius_inner(Xi, V)))
        return self.dissipation(P_prev, V) + self.dual_dissipation(P_prev, -np.asarray(Xi)) + pairing

    # aliases matching the abstract interface names
    dissipation_psi = dissipation
    dual_dissipation_psi_star = dual_dissipation
