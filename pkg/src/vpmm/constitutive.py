"""Energy and dissipation densities of the finite-strain viscoplastic model.

Stored energy densities (all isotropic, polyconvex):

* hardening   ``K(P) = c1 |P|^qP + c2 det(P)^(-q_gamma)``
* elastic     ``W(F) = c3 |F|^qF + c4 det(F)^(-eta_W)``
* gradient    ``H(P, A) = K(P) + |A|^qG / qG``
* regulariser ``W~(F) = max(C7 (|F|^k + |F^-1|^k) - C8, 0)``, ``k = p' q_W``

Dissipation ``R(V) = sigma |V| + (nu / p) |V|^p`` and its conjugate

    R*(Xi) = max(|Xi| - sigma, 0)^p' / (p' nu^(p'-1)),

obtained from the scalar reduction ``sup_r (|Xi| - sigma) r - nu r^p / p``.

All densities are +inf outside GL+(d).  The scalar public functions
return :data:`~vpmm.errors.INFINITE` there; the ``*_values`` batch
helpers return ``np.inf`` entries for use inside assembly loops.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from . import tensor as tc
from .errors import INFINITE, ConfigError, NonPositiveDeterminant

Field = Union[float, np.ndarray]


# --------------------------------------------------------------------------
# parameter records
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentSet:
    q_phi: float
    q_F: float
    q_P: float
    q_G: float
    q_gamma: float
    p: float
    d: int = 2

    @property
    def q_tilde(self) -> float:
        return 1.0 / (2.0 / self.q_gamma + 1.0 / self.q_G)

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)

    def violations(self) -> list[str]:
        """Return one message per violated exponent condition (empty if valid).

        Two named conditions are checked besides the basic bounds:
        *exponent balance* ``1/q_phi = 1/q_F + 1/q_P`` with ``q_phi > d``, and
        *gradient integrability* ``q_G > d`` and ``q_tilde > d`` where
        ``1/q_tilde = 2/q_gamma + 1/q_G``.
        """
        d = self.d
        out = []
        if d not in (2, 3):
            out.append(f"dimension d={d} must be 2 or 3")
        for name in ("q_phi", "q_F", "q_P", "q_G", "q_gamma", "p"):
            if not getattr(self, name) > 1:
                out.append(f"{name}={getattr(self, name)} must exceed 1")
        if out:
            return out
        for name in ("q_F", "q_P", "q_gamma"):
            if not getattr(self, name) > d:
                out.append(f"growth condition: {name}={getattr(self, name)} must exceed d={d}")
        if not self.q_G > d:
            out.append(f"gradient integrability: q_G={self.q_G} must exceed d={d}")
        lhs, rhs = 1.0 / self.q_phi, 1.0 / self.q_F + 1.0 / self.q_P
        if not np.isclose(lhs, rhs, rtol=1e-12, atol=0.0):
            out.append(f"exponent balance: 1/q_phi={lhs:.6g} differs from 1/q_F + 1/q_P={rhs:.6g}")
        if not self.q_phi > d:
            out.append(f"exponent balance: q_phi={self.q_phi} must exceed d={d}")
        if not self.q_tilde > d:
            out.append(
                f"gradient integrability: q_tilde={self.q_tilde:.6g} "
                f"(1/q_tilde = 2/q_gamma + 1/q_G) must exceed d={d}"
            )
        return out

    def validate(self) -> "ExponentSet":
        bad = self.violations()
        if bad:
            raise ConfigError("; ".join(bad))
        return self


@dataclass(frozen=True)
class HardeningParams:
    c1: float = 1.0
    c2: float = 1.0
    q_P: float = 6.0
    q_gamma: float = 12.0

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > 0):
            raise ConfigError("hardening constants c1, c2 must be positive")


@dataclass(frozen=True)
class ElasticParams:
    c3: float = 1.0
    c4: float = 1.0
    eta_W: float = 2.0

    def __post_init__(self):
        if not (self.c3 > 0 and self.c4 > 0 and self.eta_W > 0):
            raise ConfigError("elastic constants c3, c4, eta_W must be positive")


@dataclass(frozen=True)
class DissipationParams:
    """Yield stress and viscosity; both may be per-node arrays."""

    sigma_yield: Field = 1.0
    nu: Field = 1.0
    p: float = 2.0

    def __post_init__(self):
        if not self.p > 1:
            raise ConfigError("dissipation exponent p must exceed 1")
        if np.any(np.asarray(self.sigma_yield) <= 0) or np.any(np.asarray(self.nu) <= 0):
            raise ConfigError("sigma_yield and nu must be positive")

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)


@dataclass(frozen=True)
class RegularizerParams:
    C7: float = 1.0
    C8: float = 0.0
    q_W: float = 6.0

    def __post_init__(self):
        if self.C7 < 0 or self.C8 < 0 or not self.q_W > 1:
            raise ConfigError("regularizer needs C7, C8 >= 0 and q_W > 1")


def _norm(A):
    return tc.frobenius_norm(A)


def _norm_pow(A, q):
    # (|A|^2)^(q/2) is exact for the identity and even q, unlike sqrt then power
    return tc.frobenius_inner(A, A) ** (0.5 * q)


def _scalar_or_inf(value):
    value = float(value)
    return INFINITE if value == np.inf else value


def _require_glplus(A, what):
    if np.any(~(tc.det(A) > 0)):
        raise NonPositiveDeterminant(f"{what}: det <= 0")


# --------------------------------------------------------------------------
# hardening K and gradient term H
# --------------------------------------------------------------------------


def hardening_values(P, hp: HardeningParams):
    P = np.asarray(P, dtype=float)
    dP = tc.det(P)
    ok = dP > 0
    safe = np.where(ok, dP, 1.0)
    val = hp.c1 * _norm_pow(P, hp.q_P) + hp.c2 * safe ** (-hp.q_gamma)
    return np.where(ok, val, np.inf)


def hardening_K(P, hp: HardeningParams):
    return _scalar_or_inf(hardening_values(tc.as_mat(P), hp))


def d_hardening_K(P, hp: HardeningParams):
    """``DK(P) = c1 qP |P|^(qP-2) P - c2 q_gamma det(P)^(-q_gamma) P^-T``."""
    P = np.asarray(P, dtype=float)
    _require_glplus(P, "hardening derivative")
    n = _norm(P)[..., None, None]
    dP = tc.det(P)[..., None, None]
    return hp.c1 * hp.q_P * n ** (hp.q_P - 2) * P - hp.c2 * hp.q_gamma * dP ** (-hp.q_gamma) * tc.inv_T(P)


def gradient_term_H(P, A, hp: HardeningParams, q_G: float):
    """``H(P, A) = K(P) + |A|^qG / qG`` with partials ``(dH/dP, dH/dA)``.

    Returns ``(value, dP, dA)``; outside GL+ the value is INFINITE and the
    partials are ``None``.
    """
    P = tc.as_mat(P)
    A = np.asarray(A, dtype=float)
    k = hardening_K(P, hp)
    nA = float(np.sqrt(np.sum(A * A)))
    value = k + nA**q_G / q_G
    if k is INFINITE:
        return INFINITE, None, None
    dA = nA ** (q_G - 2) * A if nA > 0 else np.zeros_like(A)
    return value, d_hardening_K(P, hp), dA


def gradient_power_term(A, q_G: float):
    """Batch value ``|A|^qG / qG`` and derivative ``|A|^(qG-2) A`` over the last 3 axes."""
    n2 = np.einsum("...ijk,...ijk->...", A, A)
    n = np.sqrt(n2)
    val = n**q_G / q_G
    # q_G > 2 in every admissible setting, so the derivative vanishes at 0
    der = (n ** (q_G - 2))[..., None, None, None] * A
    return val, der


# --------------------------------------------------------------------------
# elastic energy W and stresses
# --------------------------------------------------------------------------


def elastic_values(F, ep: ElasticParams, q_F: float):
    F = np.asarray(F, dtype=float)
    dF = tc.det(F)
    ok = dF > 0
    safe = np.where(ok, dF, 1.0)
    val = ep.c3 * _norm_pow(F, q_F) + ep.c4 * safe ** (-ep.eta_W)
    return np.where(ok, val, np.inf)


def elastic_W(F, ep: ElasticParams, q_F: float):
    return _scalar_or_inf(elastic_values(tc.as_mat(F), ep, q_F))


def d_elastic_W(F, ep: ElasticParams, q_F: float):
    """``DW(F) = c3 qF |F|^(qF-2) F - c4 eta det(F)^(-eta-1) cof(F)``."""
    F = np.asarray(F, dtype=float)
    _require_glplus(F, "elastic derivative")
    n = _norm(F)[..., None, None]
    dF = tc.det(F)[..., None, None]
    return ep.c3 * q_F * n ** (q_F - 2) * F - ep.c4 * ep.eta_W * dF ** (-ep.eta_W - 1) * tc.cofactor(F)


def mandel_stress(F, ep: ElasticParams, q_F: float):
    """Closed-form Mandel stress ``F^T DW(F)``.

    ``c3 qF |F|^(qF-2) F^T F - c4 eta det(F)^(-eta) 1``; the cofactor term
    collapses to the identity because ``F^T cof(F) = det(F) 1``.
    """
    F = np.asarray(F, dtype=float)
    _require_glplus(F, "Mandel stress")
    d = F.shape[-1]
    n = _norm(F)[..., None, None]
    dF = tc.det(F)[..., None, None]
    FtF = np.swapaxes(F, -1, -2) @ F
    return ep.c3 * q_F * n ** (q_F - 2) * FtF - ep.c4 * ep.eta_W * dF ** (-ep.eta_W) * np.eye(d)


def kirchhoff_stress(F, ep: ElasticParams, q_F: float):
    F = np.asarray(F, dtype=float)
    return d_elastic_W(F, ep, q_F) @ np.swapaxes(F, -1, -2)


def backstress_B(F, P, ep: ElasticParams, q_F: float):
    """``B(F, P) = M(F P^-1) P^-T``.

    Note that the derivative of ``P -> W(F P^-1)`` is ``-B``.
    """
    F = np.asarray(F, dtype=float)
    P = np.asarray(P, dtype=float)
    _require_glplus(F, "backstress (F)")
    Pinv = tc.inverse_glplus(P)
    Fe = F @ Pinv
    return mandel_stress(Fe, ep, q_F) @ np.swapaxes(Pinv, -1, -2)


def stress_control_ratio(F, ep: ElasticParams, q_F: float) -> float:
    """``|M(F)| / (W(F) + 1)``.

    Bounded by ``qF + eta_W sqrt(d)``: the triangle inequality on the two
    terms of the closed form together with ``|F^T F| <= |F|^2`` gives
    ``|M| <= qF c3 |F|^qF + eta sqrt(d) c4 det^-eta <= max(qF, eta sqrt d) W``.
    """
    F = tc.as_mat(F)
    M = mandel_stress(F, ep, q_F)
    return float(_norm(M) / (elastic_values(F, ep, q_F) + 1.0))


def stress_control_bound(ep: ElasticParams, q_F: float, d: int) -> float:
    return q_F + ep.eta_W * np.sqrt(d)


# --------------------------------------------------------------------------
# regulariser
# --------------------------------------------------------------------------


def _reg_exponent(rp: RegularizerParams, p: float) -> float:
    return p / (p - 1.0) * rp.q_W


def regularizer_values(F, rp: RegularizerParams, p: float):
    F = np.asarray(F, dtype=float)
    k = _reg_exponent(rp, p)
    dF = tc.det(F)
    ok = dF > 0
    Fs = np.where(ok[..., None, None], F, np.eye(F.shape[-1]))
    Finv = np.swapaxes(tc.inv_T(Fs), -1, -2)
    raw = rp.C7 * (_norm_pow(Fs, k) + _norm_pow(Finv, k)) - rp.C8
    return np.where(ok, np.maximum(raw, 0.0), np.inf)


def regularizer_Wtilde(F, rp: RegularizerParams, p: float):
    return _scalar_or_inf(regularizer_values(tc.as_mat(F), rp, p))


def d_regularizer_Wtilde(F, rp: RegularizerParams, p: float):
    """Derivative of the clamped regulariser (zero where the clamp is active)."""
    F = np.asarray(F, dtype=float)
    _require_glplus(F, "regularizer derivative")
    k = _reg_exponent(rp, p)
    G = np.swapaxes(tc.inv_T(F), -1, -2)
    nF = _norm(F)[..., None, None]
    nG = _norm(G)[..., None, None]
    Gt = np.swapaxes(G, -1, -2)
    der = rp.C7 * k * (nF ** (k - 2) * F - nG ** (k - 2) * (Gt @ G @ Gt))
    raw = rp.C7 * (nF**k + nG**k) - rp.C8
    return np.where(raw > 0, der, 0.0)


# --------------------------------------------------------------------------
# dissipation
# --------------------------------------------------------------------------


def dissipation_values(V, sigma, nu, p):
    n = _norm(V)
    return sigma * n + nu / p * n**p


def dissipation_R(V, dp: DissipationParams) -> float:
    return float(dissipation_values(tc.as_mat(V), dp.sigma_yield, dp.nu, dp.p))


def conjugate_values(Xi, sigma, nu, p):
    q = p / (p - 1.0)
    a = np.maximum(_norm(Xi) - sigma, 0.0)
    return a**q / (q * nu ** (q - 1.0))


def dissipation_R_conj(Xi, dp: DissipationParams) -> float:
    return float(conjugate_values(tc.as_mat(Xi), dp.sigma_yield, dp.nu, dp.p))


def grad_conjugate_values(Xi, sigma, nu, p):
    """Gradient of R*: ``((|Xi| - sigma)_+ / nu)^(1/(p-1)) Xi / |Xi|``."""
    n = _norm(Xi)
    a = np.maximum(n - sigma, 0.0)
    rate = (a / nu) ** (1.0 / (p - 1.0))
    scale = np.where(n > 0, rate / np.where(n > 0, n, 1.0), 0.0)
    return scale[..., None, None] * Xi


@dataclass(frozen=True)
class YieldBall:
    """The elastic domain ``{Xi : |Xi| <= radius}``, i.e. dR(0)."""

    radius: float

    def contains(self, Xi, tol: float = 0.0) -> bool:
        return bool(_norm(np.asarray(Xi, dtype=float)) <= self.radius + tol)

    __contains__ = contains


def subdiff_R(V, dp: DissipationParams):
    """Subdifferential of R at V.

    Returns the unique element ``sigma V/|V| + nu |V|^(p-2) V`` for
    ``V != 0`` and the :class:`YieldBall` of radius sigma at ``V = 0``.
    """
    V = tc.as_mat(V)
    n = float(_norm(V))
    if n == 0.0:
        return YieldBall(float(dp.sigma_yield))
    return dp.sigma_yield * V / n + dp.nu * n ** (dp.p - 2) * V


def prox_dissipation(Z, lam, sigma, nu, p):
    """Batch proximal map of ``lam * R`` (radial shrinkage).

    Minimises ``|W - Z|^2 / 2 + lam R(W)`` per matrix.  The radius solves
    ``rho - |Z| + lam sigma + lam nu rho^(p-1) = 0``.
    """
    Z = np.asarray(Z, dtype=float)
    nz = _norm(Z)
    excess = nz - lam * sigma
    lam_nu = np.broadcast_to(lam * nu, nz.shape).astype(float)
    excess_b = np.broadcast_to(excess, nz.shape)
    rho = np.zeros(nz.shape)
    active = excess_b > 0
    if p == 2.0:
        rho[active] = excess_b[active] / (1.0 + lam_nu[active])
    else:
        for idx in zip(*np.nonzero(active)):
            rho[idx] = _radial_root(excess_b[idx], lam_nu[idx], p)
    scale = np.where(nz > 0, rho / np.where(nz > 0, nz, 1.0), 0.0)
    return scale[..., None, None] * Z


def _radial_root(e, c, p):
    # rho + c rho^(p-1) = e on [0, e]; the left side is increasing
    lo, hi = 0.0, e
    rho = e / (1.0 + c) if p >= 2 else e
    for _ in range(200):
        f = rho + c * rho ** (p - 1) - e
        if abs(f) <= 1e-15 * e:
            break
        if f > 0:
            hi = rho
        else:
            lo = rho
        if hi - lo <= 1e-15 * max(e, 1e-300):
            break
        df = 1.0 + c * (p - 1) * rho ** (p - 2) if rho > 0 else np.inf
        step = rho - f / df
        rho = step if lo < step < hi else 0.5 * (lo + hi)
    return rho
