"""Multiuser downlink: geometric-mean SINR under channel-matched beamforming.

Every user is served with the normalized composite channel as precoder,
so the beamformers are a function of the RIS phases alone. The
optimization alternates between

* the phases, by gradient ascent with Armijo backtracking on
  ``G(phi) = sum_k log2 SINR_k``, and
* the powers, a concave program after the change of variable
  ``eta = 2**gamma``, solved by gradient ascent along the (active) budget
  surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import DegenerateChannelError, EffectiveChannel, RisConfig, composite_channels, wrap_phase
from .report import OptimizationReport

LOG2E = 1.0 / math.log(2.0)


@dataclass(frozen=True, eq=False)
class PowerAllocation:
    """Per-user downlink powers in watts under a total budget ``p_max``."""

    eta: np.ndarray
    p_max: float

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float).reshape(-1)
        object.__setattr__(self, "eta", eta)
        if not self.p_max > 0:
            raise ValueError("p_max must be positive")
        if np.any(eta < 0):
            raise ValueError("powers must be nonnegative")
        if eta.sum() > self.p_max * (1 + 1e-9):
            raise ValueError(f"total power {eta.sum()} exceeds budget {self.p_max}")

    @classmethod
    def uniform(cls, n_users: int, p_max: float) -> "PowerAllocation":
        return cls(np.full(n_users, p_max / n_users), p_max)


@dataclass(frozen=True)
class PhaseAscentOptions:
    step0: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 40
    max_iter: int = 200
    tol: float = 1e-7
    step_rule: str = "fixed"

    def __post_init__(self):
        if self.step_rule not in ("fixed", "bb"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.max_iter < 1 or self.max_backtracks < 0:
            raise ValueError("max_iter must be >= 1 and max_backtracks >= 0")
        if not (self.step0 > 0 and 0 < self.shrink < 1 and 0 < self.armijo < 1):
            raise ValueError("invalid Armijo parameters")


@dataclass(frozen=True)
class PowerOptions:
    max_iter: int = 200
    kkt_tol: float = 1e-10
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 60


@dataclass(frozen=True)
class JointOptions:
    tol: float = 1e-6
    max_outer: int = 50
    order: tuple[str, ...] = ("phases", "powers")
    phase: PhaseAscentOptions = field(default_factory=PhaseAscentOptions)
    power: PowerOptions = field(default_factory=PowerOptions)

    def __post_init__(self):
        if set(self.order) - {"phases", "powers"} or not self.order:
            raise ValueError(f"order must be drawn from 'phases'/'powers', got {self.order}")


@dataclass(frozen=True, eq=False)
class MuState:
    """RIS phases, powers, and the CM beamformers they induce."""

    ris: RisConfig
    power: PowerAllocation
    beamformers: np.ndarray  # (K, N_B)
    objective_log: float

    @classmethod
    def evaluate(cls, eff: EffectiveChannel, ris: RisConfig, power: PowerAllocation,
                 sigma2: float) -> "MuState":
        return cls(ris, power, cm_beamformers(eff, ris),
                   objective_log(eff, ris, power, sigma2))

    @property
    def geometric_mean_sinr(self) -> float:
        return 2.0 ** (self.objective_log / self.power.eta.size)


def _eta(power) -> np.ndarray:
    if isinstance(power, PowerAllocation):
        return power.eta
    return np.asarray(power, dtype=float)


def _nonzero_norms(C: np.ndarray) -> np.ndarray:
    sq = np.einsum("kb,kb->k", C.conj(), C).real
    bad = np.flatnonzero(sq == 0)
    if bad.size:
        raise DegenerateChannelError(f"composite channel of user {bad[0]} is zero")
    return sq


def cm_beamformers(eff: EffectiveChannel, ris: RisConfig) -> np.ndarray:
    """Channel-matched precoders of all users, one unit-norm row each."""
    C = composite_channels(eff, ris)
    return C / np.sqrt(_nonzero_norms(C))[:, None]


def cm_beamformer(eff: EffectiveChannel, k: int, ris: RisConfig) -> np.ndarray:
    if not 0 <= k < eff.n_users:
        raise IndexError(f"user index {k} out of range for {eff.n_users} users")
    c = eff.D[k] @ ris.coefficients + eff.g_d[k]
    norm = np.linalg.norm(c)
    if norm == 0:
        raise DegenerateChannelError(f"composite channel of user {k} is zero")
    return c / norm


def f_matrix(eff: EffectiveChannel, ris: RisConfig, power) -> np.ndarray:
    """``F[k, l] = eta_l * c_k^H c_l`` for composite channels ``c``."""
    C = composite_channels(eff, ris)
    return (C.conj() @ C.T) * _eta(power)[None, :]


def f_coeff(eff: EffectiveChannel, ris: RisConfig, power, k: int, l: int) -> complex:
    K = eff.n_users
    if not (0 <= k < K and 0 <= l < K):
        raise IndexError(f"user pair ({k}, {l}) out of range for {K} users")
    x = ris.coefficients
    c_k = eff.D[k] @ x + eff.g_d[k]
    c_l = eff.D[l] @ x + eff.g_d[l]
    return complex(_eta(power)[l] * np.vdot(c_k, c_l))


def a_coeffs(eff: EffectiveChannel, ris: RisConfig) -> np.ndarray:
    """Power-independent coupling ``a[k, l] = |c_k^H c_l|^2 / ||c_l||^2``.

    ``a[k, k] = ||c_k||^2`` is the signal gain of user ``k`` and
    ``eta_l * a[k, l]`` is the interference user ``l``'s stream causes at ``k``.
    """
    C = composite_channels(eff, ris)
    sq = _nonzero_norms(C)
    gram = C.conj() @ C.T
    a = np.abs(gram) ** 2 / sq[None, :]
    a[np.diag_indices_from(a)] = sq
    return a


def _off_diagonal(m: np.ndarray) -> np.ndarray:
    out = m.copy()
    np.fill_diagonal(out, 0.0)
    return out


def sinrs_from_a(a: np.ndarray, eta: np.ndarray, sigma2: float) -> np.ndarray:
    interference = _off_diagonal(a * eta[None, :]).sum(axis=1)
    return np.diag(a) * eta / (interference + sigma2)


def sinrs(eff: EffectiveChannel, ris: RisConfig, power, sigma2: float) -> np.ndarray:
    return sinrs_from_a(a_coeffs(eff, ris), _eta(power), sigma2)


def power_objective(eta, a: np.ndarray, sigma2: float) -> float:
    """``sum_k log2 SINR_k`` for fixed coupling ``a``; ``-inf`` if any power is zero."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta <= 0):
        return -math.inf
    return float(np.sum(np.log2(sinrs_from_a(a, eta, sigma2))))


def _log_objective(D, g_d, x, eta, sigma2) -> float:
    # hot path of the phase line search: objective_log without the wrappers
    C = D @ x + g_d
    G = C.conj() @ C.T
    S = G.diagonal().real
    if not np.all(S > 0):
        raise DegenerateChannelError("composite channel of some user is zero")
    coupling = (G.real**2 + G.imag**2) * (eta / S)[None, :]
    np.fill_diagonal(coupling, 0.0)
    return float(np.sum(np.log2(eta * S / (coupling.sum(axis=1) + sigma2))))


def objective_log(eff: EffectiveChannel, ris: RisConfig, power, sigma2: float) -> float:
    """Sum over users of log2 SINR, i.e. K times log2 of the geometric-mean SINR.

    Returns ``-inf`` when some user has zero power (its SINR, hence the
    geometric mean, is zero).
    """
    eta = _eta(power)
    if np.any(eta <= 0):
        return -math.inf
    return _log_objective(eff.D, eff.g_d, ris.coefficients, eta, sigma2)


def grad_phi(eff: EffectiveChannel, ris: RisConfig, power, sigma2: float) -> np.ndarray:
    """Analytic gradient of :func:`objective_log` with respect to the phases."""
    eta = _eta(power)
    if np.any(eta <= 0):
        raise ValueError("gradient undefined: some user has zero power")
    x = ris.coefficients
    D = eff.D
    C = D @ x + eff.g_d
    S = _nonzero_norms(C)
    G = C.conj() @ C.T  # G[k, l] = c_k^H c_l
    Q = np.abs(G) ** 2

    # P[k, l, n] = (D_k^H c_l)[n];  dG[k, l, n] = d(c_k^H c_l) / d phi_n
    P = np.matmul(C[None, :, :], D.conj())
    dG = 1j * (x[None, None, :] * np.conj(np.swapaxes(P, 0, 1)) - np.conj(x)[None, None, :] * P)
    dS = np.einsum("kkn->kn", dG).real
    dQ = 2.0 * (np.conj(G)[:, :, None] * dG).real

    W = np.tile(eta / S, (S.size, 1))
    np.fill_diagonal(W, 0.0)
    interference = (W * Q).sum(axis=1)
    dI = np.matmul(W[:, None, :], dQ)[:, 0, :] - (W * Q / S[None, :]) @ dS
    per_user = dS / S[:, None] - dI / (interference + sigma2)[:, None]
    return LOG2E * per_user.sum(axis=0)


def phase_ascent(eff: EffectiveChannel, ris: RisConfig, power, sigma2: float,
                 opts: PhaseAscentOptions | None = None) -> tuple[RisConfig, OptimizationReport]:
    """Armijo gradient ascent on the phases for fixed powers.

    Phases move freely during the iteration and are wrapped into
    ``[-pi, pi]`` on return. If no step passes the sufficient-increase test
    within ``max_backtracks`` halvings the current point is returned with
    ``converged=False``.
    """
    opts = opts or PhaseAscentOptions()
    eta = _eta(power)
    rho = ris.rho
    phi = ris.phi.copy()

    if np.any(eta <= 0):
        raise ValueError("phase ascent needs strictly positive powers")

    def value(p):
        return _log_objective(eff.D, eff.g_d, rho * np.exp(1j * p), eta, sigma2)

    f = value(phi)
    if not np.isfinite(f):
        raise ValueError("phase ascent needs a finite starting objective")
    report = OptimizationReport(trajectory=[f])
    prev = None

    for _ in range(opts.max_iter):
        g = grad_phi(eff, RisConfig(rho, phi), eta, sigma2)
        gg = float(g @ g)
        if gg == 0.0:
            report.converged = True
            report.message = "zero gradient"
            break
        t = opts.step0
        if opts.step_rule == "bb" and prev is not None:
            s, y = phi - prev[0], g - prev[1]
            sy = float(s @ y)
            if sy < 0:
                t = float(s @ s) / -sy
        prev = (phi, g)
        for _ in range(opts.max_backtracks + 1):
            candidate = phi + t * g
            fc = value(candidate)
            if fc >= f + opts.armijo * t * gg:
                break
            t *= opts.shrink
        else:
            report.message = "line search failed"
            break
        gain = fc - f
        phi, f = candidate, fc
        report.trajectory.append(f)
        report.iterations += 1
        if gain <= opts.tol * max(abs(f), 1.0):
            report.converged = True
            break

    return RisConfig(rho, wrap_phase(phi)), report


def _power_terms(gamma, a, sigma2):
    eta = np.exp2(gamma)
    coupling = a * eta[None, :]
    interference = coupling.sum(axis=1) - np.diag(coupling)
    denom = interference + sigma2
    value = float(np.sum(gamma + np.log2(np.diag(a)) - np.log2(denom)))
    # share[k, j]: fraction of user k's interference-plus-noise due to user j
    share = coupling / denom[:, None]
    np.fill_diagonal(share, 0.0)
    grad = 1.0 - share.sum(axis=0)
    return value, grad, eta, share


def _tangent(grad, eta):
    # component of the gradient along the budget surface sum(2**gamma) = p_max
    normal = eta * math.log(2.0)
    mu = float(grad @ normal) / float(normal @ normal)
    return grad - mu * normal, mu, normal


def _newton_direction(share, eta, mu, normal, r):
    """Newton step on the budget surface from the bordered KKT system."""
    ln2 = math.log(2.0)
    hess = -ln2 * (np.diag(share.sum(axis=0)) - share.T @ share)
    hess_l = hess - mu * ln2**2 * np.diag(eta)
    K = eta.size
    kkt = np.zeros((K + 1, K + 1))
    kkt[:K, :K] = hess_l
    kkt[:K, K] = normal
    kkt[K, :K] = normal
    try:
        sol = np.linalg.solve(kkt, np.concatenate([-r, [0.0]]))
    except np.linalg.LinAlgError:
        return None
    d = sol[:K]
    if not np.all(np.isfinite(d)) or float(r @ d) <= 0:
        return None
    return d


def power_budget_slack(eta: np.ndarray, a: np.ndarray, sigma2: float, scale: float = 1.01) -> float:
    """Objective gain from scaling every power by ``scale``, computed without cancellation.

    Strictly positive whenever ``sigma2 > 0``, which is why the budget is
    active at the optimum.
    """
    coupling = a * eta[None, :]
    interference = coupling.sum(axis=1) - np.diag(coupling)
    ratio = (scale - 1.0) * sigma2 / (scale * interference + sigma2)
    return float(np.sum(np.log1p(ratio)) * LOG2E)


def power_opt(a: np.ndarray, sigma2: float, p_max: float, init=None,
              opts: PowerOptions | None = None) -> tuple[PowerAllocation, OptimizationReport]:
    """Maximize ``sum_k log2 SINR_k`` over powers with ``sum(eta) <= p_max``.

    Works in ``gamma = log2(eta)``, where the objective is concave. The
    budget is active at the optimum, so iterates stay on
    ``sum(2**gamma) = p_max``: each step is a Newton step restricted to
    that surface (the projected gradient when Newton fails to ascend),
    pulled back by the uniform shift ``gamma -= log2(sum(2**gamma) / p_max)``
    and accepted by Armijo backtracking. Stops when the projected gradient
    norm (the KKT residual) drops below ``opts.kkt_tol``.
    """
    opts = opts or PowerOptions()
    a = np.asarray(a, dtype=float)
    if not p_max > 0:
        raise ValueError(f"p_max must be positive, got {p_max}")
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("a must be a square matrix")
    if np.any(np.diag(a) <= 0) or np.any(a < 0):
        raise ValueError("a must be nonnegative with a positive diagonal")
    K = a.shape[0]

    eta0 = np.full(K, p_max / K) if init is None else _eta(init).astype(float)
    if np.any(eta0 <= 0):
        raise ValueError("initial powers must be strictly positive")

    def retract(gamma):
        return gamma - math.log2(np.exp2(gamma).sum() / p_max)

    gamma = retract(np.log2(eta0))
    f, grad, eta, share = _power_terms(gamma, a, sigma2)
    r, mu, normal = _tangent(grad, eta)
    report = OptimizationReport(trajectory=[f])

    for _ in range(opts.max_iter):
        if float(np.linalg.norm(r)) <= opts.kkt_tol:
            report.converged = True
            break
        d = _newton_direction(share, eta, mu, normal, r)
        newton = d is not None
        if not newton:
            d = r
        slope = float(r @ d)
        if newton and slope <= 64 * np.finfo(float).eps * max(abs(f), 1.0):
            # predicted gain is below the rounding level of f; judge the
            # Newton step by the residual instead
            candidate = retract(gamma + d)
            fc, gc, ec, sc = _power_terms(candidate, a, sigma2)
            rc = _tangent(gc, ec)
            if np.linalg.norm(rc[0]) >= np.linalg.norm(r):
                report.message = "stalled at rounding level"
                break
            gamma, f, grad, eta, share = candidate, fc, gc, ec, sc
            r, mu, normal = rc
            report.trajectory.append(f)
            report.iterations += 1
            continue
        t = 1.0
        for _ in range(opts.max_backtracks + 1):
            candidate = retract(gamma + t * d)
            fc, gc, ec, sc = _power_terms(candidate, a, sigma2)
            if fc >= f + opts.armijo * t * slope:
                break
            t *= opts.shrink
        else:
            report.message = "line search failed"
            break
        gamma, f, grad, eta, share = candidate, fc, gc, ec, sc
        r, mu, normal = _tangent(grad, eta)
        report.trajectory.append(f)
        report.iterations += 1

    report.kkt_residual = float(np.linalg.norm(r))
    report.multiplier = mu
    if power_budget_slack(eta, a, sigma2) <= 0:
        raise RuntimeError("uniform power scaling failed to raise the objective; budget not active")
    # renormalize so the budget holds to the last bit
    eta = eta * (p_max / eta.sum())
    return PowerAllocation(eta, p_max), report


def joint_optimize(eff: EffectiveChannel, sigma2: float, p_max: float,
                   init_ris: RisConfig | None = None, init_power: PowerAllocation | None = None,
                   rho: float = 1.0, opts: JointOptions | None = None
                   ) -> tuple[MuState, OptimizationReport]:
    """Alternate phase ascent and power allocation until the objective settles.

    Starts from zero phases (or ``init_ris``) and a uniform split of
    ``p_max`` (or ``init_power``). The outer trajectory holds the objective
    after every full round and never decreases, since each step starts
    from the current point and only accepts improvements.
    """
    opts = opts or JointOptions()
    ris = init_ris if init_ris is not None else RisConfig.zeros(eff.n_ris, rho)
    power = init_power if init_power is not None else PowerAllocation.uniform(eff.n_users, p_max)
    f = objective_log(eff, ris, power, sigma2)
    report = OptimizationReport(trajectory=[f])

    for outer in range(1, opts.max_outer + 1):
        for step in opts.order:
            if step == "phases":
                ris, inner = phase_ascent(eff, ris, power, sigma2, opts.phase)
            else:
                power, inner = power_opt(a_coeffs(eff, ris), sigma2, p_max,
                                         init=power, opts=opts.power)
            report.inner_reports.append(inner)
        f_new = objective_log(eff, ris, power, sigma2)
        report.trajectory.append(f_new)
        report.iterations = outer
        if abs(f_new - f) <= opts.tol * max(abs(f), 1.0):
            report.converged = True
            break
        f = f_new

    return MuState.evaluate(eff, ris, power, sigma2), report
