"""Residuals, surveys and oracle checks over trajectories and models."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import constitutive as cm
from . import tensor as tc
from .discretization import lp_norm
from .errors import INFINITE


# ----------------------------------------------------------------------
# report container
# ----------------------------------------------------------------------
@dataclass
class ReportEntry:
    name: str
    anchor: str  # which property the residual certifies
    value: float
    tolerance: float
    passed: bool
    evaluated_on: str = ""
    note: str = ""


@dataclass
class DiagnosticsReport:
    entries: list = field(default_factory=list)

    def add(self, name, anchor, value, tolerance, passed=None, evaluated_on="", note=""):
        value = float(value)
        if passed is None:
            passed = bool(value <= tolerance)
        self.entries.append(ReportEntry(name, anchor, value, float(tolerance), bool(passed), evaluated_on, note))
        return self.entries[-1]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def to_dict(self):
        return {"schema": "vpmm-json-1", "passed": self.passed, "entries": [asdict(e) for e in self.entries]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        w = max([len(e.name) for e in self.entries] + [4])
        lines = [f"{'name':<{w}}  {'value':>12}  {'tol':>10}  ok"]
        for e in self.entries:
            lines.append(f"{e.name:<{w}}  {e.value:12.4e}  {e.tolerance:10.2e}  {'yes' if e.passed else 'NO'}")
        return "\n".join(lines)


# ----------------------------------------------------------------------
# energy-dissipation residuals
# ----------------------------------------------------------------------
def edi_residual(traj, s_index=0, t_index=None) -> float:
    """``E(t) + sum(psi + psi*) - E(s) - sum(power)`` over the steps in ``(s, t]``.

    Non-positive values (up to tolerance) certify the energy-dissipation
    inequality on ``[t^s, t^t]``.
    """
    t_index = len(traj.t) - 1 if t_index is None else t_index
    if not 0 <= s_index <= t_index < len(traj.t):
        raise IndexError(f"need 0 <= s <= t <= N, got s={s_index}, t={t_index}")
    sl = slice(s_index + 1, t_index + 1)
    inc = np.sum(np.asarray(traj.psi_inc[sl]) + np.asarray(traj.psi_star_inc[sl]) - np.asarray(traj.power_inc[sl]))
    return float(traj.E[t_index] - traj.E[s_index] + inc)


def edi_prefix_max(traj) -> float:
    """Largest EDI residual over the non-empty prefixes (0 for a trajectory without steps)."""
    r = traj.edi_prefix_residuals()
    return float(np.max(r[1:])) if len(r) > 1 else 0.0


def edb_residual(traj) -> float:
    """Two-sided defect ``|edi_residual(0, N)|`` of the energy-dissipation balance."""
    return abs(edi_residual(traj))


def edi_scale(traj) -> float:
    return 1.0 + abs(traj.E[0])


# ----------------------------------------------------------------------
# chain rule
# ----------------------------------------------------------------------
@dataclass
class ChainRuleResult:
    max_defect: float
    defects: dict  # step index -> relative defect
    excluded: list
    guaranteed: bool
    label: str


def _active_nodes(Xi, P, sigma):
    Y = np.asarray(Xi) @ np.swapaxes(np.asarray(P), -1, -2)
    return tc.frobenius_norm(Y) > np.asarray(sigma)


def chain_rule_check(traj, system) -> ChainRuleResult:
    """Compare the central difference of ``n -> E(t^n, P^n)`` with ``<Xi^n, V> + power(t^n)``.

    ``V`` is the central difference quotient of ``P``.  Steps where some
    node enters or leaves the yield ball among ``n-1, n, n+1`` are
    excluded.  The defect is ``|a - b| / (1 + max(|a|, |b|))``.
    """
    model = system.model
    sigma = system.dissipation_params.sigma_yield
    w = system.weights
    N = len(traj.t) - 1
    defects, excluded = {}, []
    for n in range(1, N):
        act = [_active_nodes(traj.Xi[k], traj.P[k], sigma) for k in (n - 1, n, n + 1)]
        if not (np.array_equal(act[0], act[1]) and np.array_equal(act[1], act[2])):
            excluded.append(n)
            continue
        dt = traj.t[n + 1] - traj.t[n - 1]
        a = (traj.E[n + 1] - traj.E[n - 1]) / dt
        V = (traj.P[n + 1] - traj.P[n - 1]) / dt
        b = float(np.sum(w * tc.frobenius_inner(traj.Xi[n], V))) - model.load_rate_pairing(traj.t[n], traj.phi[n])
        defects[n] = abs(a - b) / (1.0 + max(abs(a), abs(b)))
    guaranteed = model.eta > 0
    label = "regularized: chain rule holds" if guaranteed else "chain rule not guaranteed"
    mx = max(defects.values()) if defects else 0.0
    return ChainRuleResult(float(mx), defects, excluded, guaranteed, label)


# ----------------------------------------------------------------------
# stress control
# ----------------------------------------------------------------------
def _rotation(theta, d):
    Q = np.eye(d)
    c, s = np.cos(theta), np.sin(theta)
    Q[0, 0], Q[0, 1], Q[1, 0], Q[1, 1] = c, -s, s, c
    return Q


@dataclass
class StressSurvey:
    max_ratio: float
    bound: float
    C5: float
    table: np.ndarray  # columns: lambda1, lambda2, angle, ratio

    @property
    def passed(self) -> bool:
        return bool(self.max_ratio <= self.bound and np.isfinite(self.C5))


def stress_control_survey(ep: cm.ElasticParams, q_F: float, d: int = 2, n_lambda=25, n_rot=4, seed=0, delta=0.1, n_perturb=4):
    """Sample ``|M(F)| / (W(F) + 1)`` on ``F = Q diag(l1, l2, 1..) Q^T``.

    ``l1, l2`` run over a log grid on ``[1e-3, 1e3]``; rotation angles are
    drawn from a seeded generator.  The variation constant ``C5`` is the
    sampled maximum of ``|M(F) - M(FN)| / (|N - 1| (W(F) + 1))`` over
    perturbations ``|N - 1| < delta``.
    """
    rng = np.random.default_rng(seed)
    lam = np.logspace(-3, 3, n_lambda)
    L1, L2 = np.meshgrid(lam, lam, indexing="ij")
    angles = rng.uniform(0, np.pi, n_rot)
    rows, Fs = [], []
    for th in angles:
        Q = _rotation(th, d)
        for l1, l2 in zip(L1.ravel(), L2.ravel()):
            D = np.ones(d)
            D[0], D[1] = l1, l2
            Fs.append(Q @ np.diag(D) @ Q.T)
            rows.append((l1, l2, th))
    Fs = np.array(Fs)
    M = cm.mandel_stress(Fs, ep, q_F)
    Wv = cm.elastic_values(Fs, ep, q_F)
    ratio = tc.frobenius_norm(M) / (Wv + 1.0)
    C5 = 0.0
    for _ in range(n_perturb):
        E = rng.standard_normal((len(Fs), d, d))
        E *= (rng.uniform(0.1, 0.99, len(Fs)) * delta / tc.frobenius_norm(E))[:, None, None]
        MN = cm.mandel_stress(Fs @ (np.eye(d) + E), ep, q_F)
        c = tc.frobenius_norm(M - MN) / (tc.frobenius_norm(E) * (Wv + 1.0))
        C5 = max(C5, float(np.max(c)))
    table = np.column_stack([np.array(rows), ratio])
    return StressSurvey(float(np.max(ratio)), cm.stress_control_bound(ep, q_F, d), C5, table)


# ----------------------------------------------------------------------
# gradient checks
# ----------------------------------------------------------------------
@dataclass
class GradientSuiteResult:
    errors: dict
    tol: float

    @property
    def max_error(self) -> float:
        return max(self.errors.values())

    @property
    def passed(self) -> bool:
        return bool(self.max_error < self.tol)


def _fd_rel_error(f, x, g, h=1e-6):
    x = np.asarray(x, float)
    fd = np.empty(x.size)
    flat = x.ravel()
    for i in range(flat.size):
        hi = h * max(1.0, abs(flat[i]))
        xp, xm = flat.copy(), flat.copy()
        xp[i] += hi
        xm[i] -= hi
        fd[i] = (float(f(xp.reshape(x.shape))) - float(f(xm.reshape(x.shape)))) / (2 * hi)
    g = np.asarray(g, float).ravel()
    return float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-8))


def _random_rotation(rng, d):
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def random_glplus(rng, d, spread=0.3):
    """``Q1 diag(exp(s)) Q2`` with ``s`` uniform in ``[-spread, spread]``."""
    s = rng.uniform(-spread, spread, d)
    return _random_rotation(rng, d) @ np.diag(np.exp(s)) @ _random_rotation(rng, d)


def gradient_fd_suite(system, n_samples=20, seed=0, tol=1e-5, break_gradient=False):
    """Assembled and pointwise derivatives against central differences.

    With ``break_gradient=True`` a unit perturbation is added to every
    analytic gradient (negative control); the suite must then fail.
    """
    rng = np.random.default_rng(seed)
    model = system.model
    mat = model.material
    d = model.dim
    dp = system.dissipation_params
    bump = 1.0 if break_gradient else 0.0
    errs = {}

    def record(key, e):
        errs[key] = max(errs.get(key, 0.0), e)

    t = 0.37
    for _ in range(n_samples):
        P = np.array([tc.as_mat(np.eye(d) + 0.1 * rng.standard_normal((d, d))) for _ in range(model.n_nodes)])
        while model.min_det(P) <= 0.2:
            P = 0.5 * (P + np.eye(d))
        phi = model.reference_phi()
        phi = model.apply_dirichlet(phi + 0.03 * rng.standard_normal(phi.shape))
        if model.energy(t, phi, P) is INFINITE:
            continue
        mask = model.free_mask()

        def f_phi(x):
            ph = phi.copy()
            ph[mask] = x[mask]
            return model.energy(t, ph, P)

        gphi = model.grad_phi(t, phi, P) + bump
        if mask.any():
            fd_mask_err = _fd_rel_error(lambda x: f_phi(x), phi, np.where(mask, gphi, 0.0))
            record("grad_phi", fd_mask_err)
        record("grad_P", _fd_rel_error(lambda X: model.energy(t, phi, X), P, model.grad_P(t, phi, P) + bump))

        F = random_glplus(rng, d)
        A = rng.standard_normal((d, d, d))
        Xi = 3.0 * rng.standard_normal((d, d))
        record("DK", _fd_rel_error(lambda X: cm.hardening_K(X, mat.hardening), F, cm.d_hardening_K(F, mat.hardening) + bump))
        record("DW", _fd_rel_error(lambda X: cm.elastic_W(X, mat.elastic, mat.q_F), F, cm.d_elastic_W(F, mat.elastic, mat.q_F) + bump))
        record(
            "DWtilde",
            _fd_rel_error(
                lambda X: cm.regularizer_Wtilde(X, mat.regularizer, mat.p),
                F,
                cm.d_regularizer_Wtilde(F, mat.regularizer, mat.p) + bump,
            ),
        )
        record(
            "D|A|^qG/qG",
            _fd_rel_error(lambda X: cm.gradient_power_term(X[None], mat.q_G)[0][0], A, cm.gradient_power_term(A[None], mat.q_G)[1][0] + bump),
        )
        sig = float(np.max(np.atleast_1d(dp.sigma_yield)))
        nu = float(np.max(np.atleast_1d(dp.nu)))
        record(
            "DR*",
            _fd_rel_error(
                lambda X: cm.conjugate_values(X, sig, nu, dp.p),
                Xi,
                cm.grad_conjugate_values(Xi, sig, nu, dp.p) + bump,
            ),
        )
    return GradientSuiteResult(errs, tol)


# ----------------------------------------------------------------------
# conjugate oracle
# ----------------------------------------------------------------------
def brute_force_conjugate(xi_norm, sigma, nu, p, tol=1e-14):
    """``max_{r >= 0} (xi_norm - sigma) r - (nu/p) r^p`` by bracketing plus safeguarded Newton."""
    a = xi_norm - sigma
    if a <= 0:
        return 0.0

    def g(r):
        return a * r - nu / p * r**p

    def dg(r):
        return a - nu * r ** (p - 1)

    lo, hi = 0.0, 1.0
    while dg(hi) > 0:
        lo, hi = hi, 2.0 * hi
    r = 0.5 * (lo + hi)
    for _ in range(200):
        slope = dg(r)
        if slope > 0:
            lo = r
        else:
            hi = r
        curv = -nu * (p - 1) * r ** (p - 2)
        step = r - slope / curv if curv < 0 else None
        r = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= tol * max(1.0, hi):
            break
    return float(g(r))


def conjugate_oracle(dp: cm.DissipationParams, n_samples=100, seed=0, d=2):
    """Largest ``|closed form - brute force|`` over seeded random matrices."""
    rng = np.random.default_rng(seed)
    sig, nu, p = float(dp.sigma_yield), float(dp.nu), float(dp.p)
    worst = 0.0
    for _ in range(n_samples):
        Xi = rng.uniform(0.0, 4.0) * rng.standard_normal((d, d))
        closed = float(cm.conjugate_values(Xi, sig, nu, p))
        brute = brute_force_conjugate(float(tc.frobenius_norm(Xi)), sig, nu, p)
        worst = max(worst, abs(closed - brute))
    return worst


# ----------------------------------------------------------------------
# tau refinement
# ----------------------------------------------------------------------
@dataclass
class TauStudy:
    N: list
    tau: list
    differences: list  # ||P_tau(T) - P_{tau/2}(T)||_{L^p}, one fewer than levels
    edi_max: list
    edb: list

    @property
    def monotone(self) -> bool:
        d = self.differences
        return all(d[i + 1] < d[i] for i in range(len(d) - 1))

    def rows(self):
        out = []
        for i, n in enumerate(self.N):
            diff = self.differences[i] if i < len(self.differences) else float("nan")
            out.append((n, self.tau[i], diff, self.edi_max[i], self.edb[i]))
        return out


def tau_refinement_study(run_level, levels=3, N0=16, threads=1, p=2.0, weights=None):
    """Run ``run_level(N)`` for ``N = N0, 2 N0, ...`` and compare final plastic states.

    ``run_level`` must build its own system so levels can run on separate
    threads.
    """
    if levels < 3:
        raise ValueError("a refinement study needs at least 3 levels")
    Ns = [N0 * 2**k for k in range(levels)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trajs = list(pool.map(run_level, Ns))
    else:
        trajs = [run_level(n) for n in Ns]
    w = weights if weights is not None else np.ones(len(trajs[0].P[-1]))
    diffs = [lp_norm(trajs[i].P[-1] - trajs[i + 1].P[-1], p, w) for i in range(levels - 1)]
    return TauStudy(
        N=Ns,
        tau=[tr.tau for tr in trajs],
        differences=diffs,
        edi_max=[edi_prefix_max(tr) for tr in trajs],
        edb=[edb_residual(tr) for tr in trajs],
    )
