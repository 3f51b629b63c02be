"""Minimizing-movement time stepping for the viscoplastic gradient system.

Each step solves

    P^n in argmin_P  tau Psi_{P^{n-1}}((P - P^{n-1}) / tau) + E(t^n, P)

in the reduced rate ``W = V (P^{n-1})^{-1}``, where the dissipation is the
isotropic ``sum_a w_a R(W_a)``.  The solver alternates a deformation solve
(for ``E`` and its marginal gradient) with a proximal-gradient update of
``W``; the prox of ``R`` is a radial shrinkage.  A step is accepted once
the Fenchel gap of ``(V^n, -Xi^n)`` is below tolerance and the competitor
inequality against ``P^{n-1}`` holds.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import constitutive as cm
from . import tensor as tc
from .errors import INFINITE, InnerSolverDiverged, StepRejected, TimeOutOfRange

QUADRATURES = {
    "endpoint": None,
    "midpoint": (np.array([0.5]), np.array([1.0])),
    "gauss3": (
        0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)]),
        np.array([5.0, 8.0, 5.0]) / 18.0,
    ),
}


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if not (self.T > 0 and self.N >= 1):
            raise ValueError("time grid needs T > 0 and N >= 1")

    @property
    def tau(self) -> float:
        return self.T / self.N

    def node(self, n: int) -> float:
        # exact endpoints: t^0 = 0 and t^N = T
        return self.T if n == self.N else n * self.tau

    @property
    def nodes(self) -> np.ndarray:
        return np.array([self.node(n) for n in range(self.N + 1)])


@dataclass(frozen=True)
class StepSettings:
    """Tolerances of the incremental solver.

    ``gap_tol`` and ``comparison_tol`` are relative to ``1 + |E|``; the
    solver itself aims ``gap_margin`` times below the acceptance threshold.
    """

    gap_tol: float = 1e-6
    comparison_tol: float = 1e-10
    gap_margin: float = 1e-2
    max_iter: int = 400


@dataclass(frozen=True)
class StepResult:
    P: np.ndarray
    phi: np.ndarray
    selection: object
    energy: float
    energy_competitor: float
    psi: float  # r * Psi_{P_prev}(V)
    psi_star_rate: float  # Psi*_{P_prev}(-Xi)
    fenchel_gap: float
    comparison_slack: float
    iterations: int
    inner_grad_norm: float

    @property
    def Xi(self):
        return self.selection.Xi


def incremental_step(system, t, P_prev, tau, phi_init=None, settings: StepSettings = StepSettings()):
    """One minimizing-movement step of length ``tau`` ending at time ``t``.

    Also used with ``tau`` replaced by a partial length for De Giorgi
    interpolation.

    Raises
    ------
    StepRejected
        If the Fenchel gap cannot be brought under tolerance.
    """
    model = system.model
    dp = system.dissipation_params
    sig, nu, p = dp.sigma_yield, dp.nu, dp.p
    w = system.weights
    P_prev = model.check_P(P_prev)
    PprevT = np.swapaxes(P_prev, -1, -2)
    tc.inverse_glplus(P_prev)
    r = float(tau)

    def rates_to_state(Wr):
        return P_prev + r * Wr @ P_prev

    def wsum(a):
        return float(np.sum(w * a))

    def dissip(Wr):
        return wsum(cm.dissipation_values(Wr, sig, nu, p))

    try:
        start = system.inner_minimize(t, P_prev, phi_init)
    except InnerSolverDiverged as exc:
        raise StepRejected(f"deformation solve failed at the competitor state: {exc}") from exc
    E_comp = start.value
    phi = start.phi
    sel = system.selection_at(t, P_prev, phi)
    Wr = np.zeros_like(P_prev)
    E_cur = E_comp
    J = E_cur
    scale = 1.0 + abs(E_comp)
    target = settings.gap_tol * settings.gap_margin * scale

    def gap_of(Wr, sel):
        Y = -sel.Xi @ PprevT
        return wsum(
            cm.dissipation_values(Wr, sig, nu, p)
            + cm.conjugate_values(Y, sig, nu, p)
            - tc.frobenius_inner(Y, Wr)
        )

    gap = gap_of(Wr, sel)
    step = 1.0 / (r * float(np.max(np.atleast_1d(nu))))
    it = 0
    while gap > target and it < settings.max_iter:
        it += 1
        grad_W = r * (sel.Xi @ PprevT)
        accepted = False
        for _ in range(60):
            Wn = cm.prox_dissipation(Wr - step * grad_W, step * r, sig, nu, p)
            dW = Wn - Wr
            Pn = rates_to_state(Wn)
            if model.min_det(Pn) > 0:
                try:
                    res = system.inner_minimize(t, Pn, phi)
                except InnerSolverDiverged:
                    res = None
                if res is not None:
                    quad = wsum(tc.frobenius_inner(grad_W, dW)) + wsum(tc.frobenius_inner(dW, dW)) / (2 * step)
                    Jn = res.value + r * dissip(Wn)
                    if res.value <= E_cur + quad + 1e-15 * scale and Jn <= J:
                        accepted = True
                        break
            step *= 0.5
        if not accepted:
            break
        sel_new = system.selection_at(t, Pn, res.phi)
        y = r * (sel_new.Xi - sel.Xi) @ PprevT
        sy = wsum(tc.frobenius_inner(dW, y))
        ss = wsum(tc.frobenius_inner(dW, dW))
        Wr, phi, sel, E_cur, J = Wn, res.phi, sel_new, res.value, Jn
        # Barzilai-Borwein step for the next trial
        step = ss / sy if sy > 0 and ss > 0 else 2.0 * step
        gap = gap_of(Wr, sel)

    P_n = rates_to_state(Wr)
    psi = r * dissip(Wr)
    slack = E_comp - E_cur - psi
    if gap > settings.gap_tol * scale or slack < -settings.comparison_tol * scale:
        raise StepRejected(
            f"step to t={t:.6g} not certified: gap={gap:.3e}, slack={slack:.3e} after {it} iterations",
            dump={"t": t, "gap": gap, "slack": slack, "iterations": it, "P": P_n},
        )
    psi_star = system.dual_dissipation(P_prev, -sel.Xi)
    return StepResult(
        P=P_n,
        phi=phi,
        selection=sel,
        energy=E_cur,
        energy_competitor=E_comp,
        psi=psi,
        psi_star_rate=psi_star,
        fenchel_gap=gap,
        comparison_slack=slack,
        iterations=it,
        inner_grad_norm=sel.grad_norm,
    )


@dataclass(frozen=True)
class DeGiorgiSample:
    t: float
    P: np.ndarray
    Xi: np.ndarray
    phi: np.ndarray
    psi_rate: float  # Psi_{P^{n-1}}((P - P^{n-1}) / (t - t^{n-1}))
    psi_star: float  # Psi*_{P^{n-1}}(-Xi)
    power: float
    fenchel_gap: float


def de_giorgi_sample(system, t, t_prev, P_prev, phi_prev, settings=StepSettings()) -> DeGiorgiSample:
    r = t - t_prev
    res = incremental_step(system, t, P_prev, r, phi_prev, settings)
    V = (res.P - P_prev) / r
    return DeGiorgiSample(
        t=t,
        P=res.P,
        Xi=res.Xi,
        phi=res.phi,
        psi_rate=system.dissipation(P_prev, V),
        psi_star=res.psi_star_rate,
        power=system.power(t, res.P, res.selection),
        fenchel_gap=res.fenchel_gap,
    )


@dataclass
class Trajectory:
    """Time-indexed record of an accepted run.

    Row ``n`` holds ``t^n, P^n, phi^n, Xi^n`` and the increments of step
    ``n`` (zeros in row 0).  ``psi_star_inc`` and ``power_inc`` follow the
    quadrature named in ``quadrature``:

    * ``endpoint``: ``tau Psi*(-Xi^n)`` and the exact time integral of the
      power along the frozen left state, ``-<l(t^n) - l(t^{n-1}), phi^{n-1}>``;
    * ``midpoint`` / ``gauss3``: De Giorgi interpolant samples inside the step.
    """

    mode: str
    quadrature: str
    tau: float
    t: list = field(default_factory=list)
    P: list = field(default_factory=list)
    phi: list = field(default_factory=list)
    Xi: list = field(default_factory=list)
    E: list = field(default_factory=list)
    psi_inc: list = field(default_factory=list)
    psi_star_inc: list = field(default_factory=list)
    power_inc: list = field(default_factory=list)
    fenchel_gap: list = field(default_factory=list)
    comparison_slack: list = field(default_factory=list)
    inner_grad_norm: list = field(default_factory=list)
    min_det_P: list = field(default_factory=list)
    config_hash: str = ""
    meta: dict = field(default_factory=dict)

    SCALAR_COLUMNS = (
        "t",
        "E",
        "psi_inc",
        "psi_star_inc",
        "power_inc",
        "fenchel_gap",
        "comparison_slack",
        "inner_grad_norm",
        "min_det_P",
    )

    def __len__(self):
        return len(self.t)

    @property
    def N(self):
        return len(self.t) - 1

    @property
    def P0(self):
        return self.P[0]

    def velocity(self, n):
        return (self.P[n] - self.P[n - 1]) / self.tau

    def edi_prefix_residuals(self) -> np.ndarray:
        """``E(t^n) + sum(psi + psi*) - E(0) - sum(power)`` for every prefix ``[0, t^n]``."""
        E = np.asarray(self.E)
        inc = np.cumsum(np.asarray(self.psi_inc) + np.asarray(self.psi_star_inc) - np.asarray(self.power_inc))
        return E - E[0] + inc

    def append(self, t, P, phi, Xi, E, psi=0.0, psi_star=0.0, power=0.0, gap=0.0, slack=0.0, gnorm=0.0, min_det=None):
        self.t.append(float(t))
        self.P.append(np.array(P))
        self.phi.append(np.array(phi))
        self.Xi.append(np.array(Xi))
        self.E.append(float(E))
        self.psi_inc.append(float(psi))
        self.psi_star_inc.append(float(psi_star))
        self.power_inc.append(float(power))
        self.fenchel_gap.append(float(gap))
        self.comparison_slack.append(float(slack))
        self.inner_grad_norm.append(float(gnorm))
        self.min_det_P.append(float(np.min(tc.det(P)) if min_det is None else min_det))


def config_hash(obj) -> str:
    """SHA-256 of the canonical JSON form (``obj.hash`` if the object provides one)."""
    if hasattr(obj, "hash"):
        return obj.hash
    text = json.dumps(obj, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def run(P0, grid: TimeGrid, system, settings: StepSettings = StepSettings(), quadrature="midpoint", config=None):
    """Produce a trajectory of the minimizing-movement scheme from ``P0``.

    Raises
    ------
    StepRejected
        With ``.trajectory`` holding the accepted prefix.
    """
    if quadrature not in QUADRATURES:
        raise ValueError(f"unknown EDI quadrature {quadrature!r}")
    model = system.model
    P0 = model.check_P(P0)
    if not model.admissible(P0):
        raise ValueError("initial plastic state is not admissible (det <= 0 somewhere)")
    traj = Trajectory(mode=model.mesh.mode, quadrature=quadrature, tau=grid.tau)
    traj.config_hash = config_hash(config) if config is not None else ""
    traj.meta = {"T": grid.T, "N": grid.N, "n_nodes": model.n_nodes, "d": model.dim}
    try:
        res0 = system.reduced_energy(0.0, P0)
    except InnerSolverDiverged as exc:
        raise StepRejected(f"initial deformation solve failed: {exc}", trajectory=traj) from exc
    sel0 = system.selection_at(0.0, P0, res0.phi)
    traj.append(0.0, P0, res0.phi, sel0.Xi, res0.value, gnorm=sel0.grad_norm, min_det=model.min_det(P0))
    P, phi = P0, res0.phi
    tau = grid.tau
    for n in range(1, grid.N + 1):
        t_prev, t = grid.node(n - 1), grid.node(n)
        try:
            step = incremental_step(system, t, P, t - t_prev, phi, settings)
            if quadrature == "endpoint":
                psi_star = tau * step.psi_star_rate
                power = -model.load_increment_pairing(t_prev, t, phi)
            else:
                nodes, weights = QUADRATURES[quadrature]
                psi_star = power = 0.0
                for c, wq in zip(nodes, weights):
                    s = de_giorgi_sample(system, t_prev + c * tau, t_prev, P, phi, settings)
                    psi_star += tau * wq * s.psi_star
                    power += tau * wq * s.power
        except StepRejected as exc:
            exc.trajectory = traj
            raise
        traj.append(
            t,
            step.P,
            step.phi,
            step.Xi,
            step.energy,
            psi=step.psi,
            psi_star=psi_star,
            power=power,
            gap=step.fenchel_gap,
            slack=step.comparison_slack,
            gnorm=step.inner_grad_norm,
            min_det=model.min_det(step.P),
        )
        P, phi = step.P, step.phi
    return traj


class Interpolants:
    """Piecewise-constant (left/right) and piecewise-linear interpolants of a trajectory."""

    def __init__(self, traj: Trajectory):
        self.traj = traj
        self.t = np.asarray(traj.t)

    def _locate(self, t):
        if not (self.t[0] <= t <= self.t[-1]):
            raise TimeOutOfRange(f"t={t} outside [{self.t[0]}, {self.t[-1]}]")
        n = int(np.searchsorted(self.t, t, side="left"))
        return max(n, 1)

    def right(self, t):
        """``P^n`` for ``t in (t^{n-1}, t^n]``; ``P^0`` at ``t = 0``."""
        if t == self.t[0]:
            return self.traj.P[0]
        return self.traj.P[self._locate(t)]

    def left(self, t):
        """``P^{n-1}`` for ``t in [t^{n-1}, t^n)``; ``P^N`` at ``t = T``."""
        if t == self.t[-1]:
            self._locate(t)
            return self.traj.P[-1]
        n = int(np.searchsorted(self.t, t, side="right"))
        self._locate(t)
        return self.traj.P[n - 1]

    def linear(self, t):
        n = self._locate(t)
        t0, t1 = self.t[n - 1], self.t[n]
        lam = (t - t0) / (t1 - t0)
        return (1 - lam) * self.traj.P[n - 1] + lam * self.traj.P[n]

    def derivative(self, t):
        n = self._locate(t)
        return (self.traj.P[n] - self.traj.P[n - 1]) / (self.t[n] - self.t[n - 1])

    def at_nodes_agree(self, n) -> bool:
        t = self.t[n]
        return all(np.array_equal(f(t), self.traj.P[n]) for f in (self.right, self.left, self.linear))


def interpolants(traj: Trajectory) -> Interpolants:
    return Interpolants(traj)


def de_giorgi_interpolant(traj: Trajectory, t, system, settings=StepSettings()) -> DeGiorgiSample:
    """De Giorgi variational interpolant at an interior time ``t``."""
    times = np.asarray(traj.t)
    if not (times[0] < t <= times[-1]):
        raise TimeOutOfRange(f"t={t} outside (0, T]")
    n = int(np.searchsorted(times, t, side="left"))
    return de_giorgi_sample(system, t, times[n - 1], traj.P[n - 1], traj.phi[n - 1], settings)


def euler_lagrange_residual(P_prev, P_n, tau, Xi_n, system) -> float:
    """Fenchel gap ``Psi(V) + Psi*(-Xi) + <Xi, V>`` at ``P_prev``; zero iff ``-Xi in dPsi(V)``."""
    V = (np.asarray(P_n) - np.asarray(P_prev)) / tau
    return system.fenchel_gap(P_prev, V, Xi_n)
