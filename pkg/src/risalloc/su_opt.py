"""Single-user joint active (BS beamformer) and passive (RIS phase) design.

All maximizers work on the normalized gain ``|w^H (D x + h_d)|^2`` where
``x = rho * exp(1j * phi)``; the SNR is that gain times ``p_t / sigma2``.
Here ``D`` and ``h_d`` are one user's entries of an
:class:`~risalloc.channel.EffectiveChannel`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import DegenerateChannelError, RisConfig, wrap_phase
from .report import OptimizationReport


@dataclass(frozen=True, eq=False)
class SuSolution:
    """Beamformer and RIS state returned by a single-user maximizer.

    ``gain`` is ``|w^H (D x + h_d)|^2`` and ``snr_linear`` is
    ``gain * p_t / sigma2``. ``bound_value`` is in gain units: for
    :func:`ub_max` it upper-bounds the gain of every feasible ``(w, phi)``,
    for :func:`lb_max` it is the lower bound the method maximizes.
    """

    w: np.ndarray
    ris: RisConfig
    gain: float
    snr_linear: float
    bound_value: float | None = None
    report: OptimizationReport | None = None
    best_index: int | None = None


def _check_shapes(D, h_d, w=None):
    D = np.asarray(D)
    h_d = np.asarray(h_d)
    if D.ndim != 2 or h_d.shape != (D.shape[0],):
        raise ValueError(f"D {D.shape} and h_d {h_d.shape} are inconsistent")
    if w is not None and np.shape(w) != (D.shape[0],):
        raise ValueError(f"beamformer of shape {np.shape(w)} does not match N_B={D.shape[0]}")
    return D, h_d


def gain(D, h_d, ris: RisConfig, w) -> float:
    """``|w^H (D x + h_d)|^2`` for RIS coefficients ``x``."""
    D, h_d = _check_shapes(D, h_d, w)
    if ris.phi.shape != (D.shape[1],):
        raise ValueError(f"{ris.phi.size} phases for N_R={D.shape[1]}")
    return float(abs(np.vdot(w, D @ ris.coefficients + h_d)) ** 2)


def eval_snr(D, h_d, ris: RisConfig, w, p_t: float, sigma2: float) -> float:
    """Received SNR (linear) with unit-norm beamformer ``w`` and transmit power ``p_t``."""
    if not (p_t > 0 and sigma2 > 0):
        raise ValueError("p_t and sigma2 must be positive")
    return p_t / sigma2 * gain(D, h_d, ris, w)


def matched_beamformer(D, h_d, ris: RisConfig) -> np.ndarray:
    """Unit-norm beamformer aligned with the composite channel."""
    c = D @ ris.coefficients + h_d
    norm = np.linalg.norm(c)
    if norm == 0:
        raise DegenerateChannelError("composite channel is zero")
    return c / norm


def aligned_phases(D, h_d, w) -> np.ndarray:
    """Phases maximizing the gain for a fixed beamformer ``w``.

    Each reflected term ``conj(g_w[i]) x_i`` with ``g_w = D^H w`` is
    rotated onto the phase of ``t_w = w^H h_d``; ``angle(0)`` is taken as 0.
    """
    g_w = D.conj().T @ w
    t_w = np.vdot(w, h_d)
    return -np.angle(np.conj(g_w)) + np.angle(t_w)


def _solution(D, h_d, w, ris, p_t, sigma2, **extra) -> SuSolution:
    g = gain(D, h_d, ris, w)
    return SuSolution(w=w, ris=ris, gain=g, snr_linear=p_t / sigma2 * g, **extra)


def ub_max(D, h_d, rho: float, p_t: float = 1.0, sigma2: float = 1.0) -> SuSolution:
    """Closed-form maximizer of the SVD-based upper bound.

    With ``D = sum_i lam_i u_i v_i^H`` and ``alpha_i = u_i^H h_d`` (the
    ``u_i`` extended to a full basis of the BS space, ``lam_i = 0`` on the
    extension), each direction ``i`` reaches at most
    ``c_i = (lam_i * rho * sum_n |v_i[n]| + |alpha_i|)^2``. The returned
    solution uses the best direction, ``w = u_{i+}``, and its aligned
    phases; ``bound_value = N_B * c_{i+}``. Ties go to the lowest index.
    """
    D, h_d = _check_shapes(D, h_d)
    n_b, n_r = D.shape
    U, svals, Vh = np.linalg.svd(D, full_matrices=True)
    rank = svals.size
    lam = np.zeros(n_b)
    lam[:rank] = svals
    # rows of V^H are v_i^H; directions past the rank have no RIS component
    V = np.zeros((n_b, n_r), dtype=complex)
    V[:rank] = Vh[:rank].conj()
    alpha = U.conj().T @ h_d

    reach = (lam * rho * np.abs(V).sum(axis=1) + np.abs(alpha)) ** 2
    best = int(np.argmax(reach))
    phi = -np.angle(np.conj(V[best])) + np.angle(alpha[best])
    ris = RisConfig(rho, wrap_phase(phi))
    w = U[:, best].copy()
    return _solution(D, h_d, w, ris, p_t, sigma2,
                     bound_value=float(n_b * reach[best]), best_index=best)


def lb_max(D, h_d, rho: float, p_t: float = 1.0, sigma2: float = 1.0) -> SuSolution:
    """Closed-form maximizer of the column-sum lower bound.

    ``w`` is the normalized sum of all columns of ``D`` plus ``h_d``; the
    phases are then aligned to ``w``. ``bound_value`` is
    ``rho^2 |w^H (sum_i d_i + h_d)|^2``, which the achieved gain never
    falls below.
    """
    D, h_d = _check_shapes(D, h_d)
    direction = D.sum(axis=1) + h_d
    norm = np.linalg.norm(direction)
    if norm == 0:
        raise DegenerateChannelError("column sum of D plus h_d is zero")
    w = direction / norm
    ris = RisConfig(rho, wrap_phase(aligned_phases(D, h_d, w)))
    return _solution(D, h_d, w, ris, p_t, sigma2, bound_value=float(rho**2 * norm**2))


def alternating_max(D, h_d, rho: float, init: RisConfig | str | None = None,
                    tol: float = 1e-8, max_iter: int = 500,
                    p_t: float = 1.0, sigma2: float = 1.0) -> SuSolution:
    """Alternate the two exact coordinate maximizers until the gain settles.

    The w-step is the matched filter for the current phases, the phi-step
    aligns the phases to the current ``w``. ``init`` is a
    :class:`RisConfig`, ``"lb"`` to start from :func:`lb_max`, or ``None``
    for zero phases. The trajectory records the gain after every half-step.
    """
    D, h_d = _check_shapes(D, h_d)
    if not tol > 0 or max_iter < 1:
        raise ValueError("need tol > 0 and max_iter >= 1")
    if init is None:
        ris = RisConfig.zeros(D.shape[1], rho)
    elif isinstance(init, str):
        if init != "lb":
            raise ValueError(f"unknown init {init!r}")
        ris = lb_max(D, h_d, rho).ris
    else:
        ris = RisConfig(rho, init.phi)

    report = OptimizationReport()
    x = ris.coefficients
    c = D @ x + h_d
    prev = float(np.vdot(c, c).real)
    if prev == 0:
        raise DegenerateChannelError("composite channel is zero at the initial phases")
    w = c / np.sqrt(prev)
    report.trajectory.append(prev)

    for it in range(1, max_iter + 1):
        phi = aligned_phases(D, h_d, w)
        x = rho * np.exp(1j * phi)
        report.trajectory.append(float(abs(np.vdot(w, D @ x + h_d)) ** 2))

        c = D @ x + h_d
        current = float(np.vdot(c, c).real)
        w = c / np.sqrt(current)
        report.trajectory.append(current)
        report.iterations = it
        if abs(current - prev) <= tol * prev:
            report.converged = True
            break
        prev = current

    return _solution(D, h_d, w, RisConfig(rho, wrap_phase(phi)), p_t, sigma2, report=report)
