"""Random channel realizations and the composite-channel objects built from them.

Small-scale fading is i.i.d. unit-variance circularly-symmetric complex
Gaussian on every link. Large-scale attenuation and blocking are folded
into the effective channel, so the optimizers never see ``beta`` or the
link indicators directly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scenario import ScenarioConfig, user_path_losses


class DegenerateChannelError(ValueError):
    """A user's composite channel (or a derived direction) is exactly zero."""


def crandn(rng: np.random.Generator, *shape) -> np.ndarray:
    """Unit-variance circularly-symmetric complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """One draw of every link in the cell.

    Attributes
    ----------
    H : (N_B, N_R) complex
        RIS to BS channel.
    h : (K, N_R) complex
        User to RIS channels, one row per user.
    h_d : (K, N_B) complex
        User to BS direct channels.
    beta_r, beta_d : (K,) float
        Linear attenuations of the reflected and direct paths.
    i_r, i_d : (K,) int
        Link existence indicators.
    """

    H: np.ndarray
    h: np.ndarray
    h_d: np.ndarray
    beta_r: np.ndarray
    beta_d: np.ndarray
    i_r: np.ndarray
    i_d: np.ndarray

    def __post_init__(self):
        n_b, n_r = self.H.shape
        k = self.h.shape[0]
        if self.h.shape != (k, n_r) or self.h_d.shape != (k, n_b):
            raise ValueError("channel dimensions are inconsistent")
        for name in ("beta_r", "beta_d", "i_r", "i_d"):
            if np.shape(getattr(self, name)) != (k,):
                raise ValueError(f"{name} must have one entry per user")
        if np.any(self.beta_r < 0) or np.any(self.beta_d < 0):
            raise ValueError("attenuations must be nonnegative")
        for name in ("i_r", "i_d"):
            if not np.all(np.isin(getattr(self, name), (0, 1))):
                raise ValueError(f"{name} entries must be 0 or 1")
        if np.any((self.i_r == 0) & (self.i_d == 0)):
            raise ValueError("a user with both links blocked is unreachable")

    @property
    def n_users(self) -> int:
        return self.h.shape[0]

    def to_dict(self) -> dict:
        """Plain-data form: complex arrays become nested ``[re, im]`` pairs, row-major."""
        def cplx(a):
            a = np.asarray(a)
            return np.stack([a.real, a.imag], axis=-1).tolist()

        return {
            "H": cplx(self.H),
            "h": cplx(self.h),
            "h_d": cplx(self.h_d),
            "beta_r": self.beta_r.tolist(),
            "beta_d": self.beta_d.tolist(),
            "i_r": [int(v) for v in self.i_r],
            "i_d": [int(v) for v in self.i_d],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelRealization":
        def cplx(v):
            a = np.asarray(v, dtype=float)
            return a[..., 0] + 1j * a[..., 1]

        return cls(
            H=cplx(data["H"]),
            h=cplx(data["h"]),
            h_d=cplx(data["h_d"]),
            beta_r=np.asarray(data["beta_r"], dtype=float),
            beta_d=np.asarray(data["beta_d"], dtype=float),
            i_r=np.asarray(data["i_r"], dtype=int),
            i_d=np.asarray(data["i_d"], dtype=int),
        )


def save_realization(real: ChannelRealization, path) -> None:
    Path(path).write_text(json.dumps(real.to_dict()))


def load_realization(path) -> ChannelRealization:
    return ChannelRealization.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class EffectiveChannel:
    """Per-user cascaded matrices and scaled direct channels.

    ``D[k][i, j] = i_r * sqrt(beta_r) * H[i, j] * h_k[j]`` so that the
    reflected contribution for RIS coefficients ``x`` is ``D[k] @ x``, and
    ``g_d[k] = i_d * sqrt(beta_d) * h_d[k]``.
    """

    D: np.ndarray  # (K, N_B, N_R)
    g_d: np.ndarray  # (K, N_B)

    @property
    def n_users(self) -> int:
        return self.D.shape[0]

    @property
    def n_bs(self) -> int:
        return self.D.shape[1]

    @property
    def n_ris(self) -> int:
        return self.D.shape[2]

    def user(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(D_k, g_d_k)`` for one user."""
        _check_index(k, self.n_users)
        return self.D[k], self.g_d[k]

    def scaled(self, factor: complex) -> "EffectiveChannel":
        return EffectiveChannel(self.D * factor, self.g_d * factor)


@dataclass(frozen=True, eq=False)
class RisConfig:
    """Reflection loss ``rho`` and per-element phases (radians).

    Phases are kept as given; :meth:`wrapped` maps them into ``[-pi, pi]``.
    """

    rho: float
    phi: np.ndarray

    def __post_init__(self):
        if not 0 < self.rho <= 1:
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=float).reshape(-1))

    @classmethod
    def zeros(cls, n_ris: int, rho: float = 1.0) -> "RisConfig":
        return cls(rho, np.zeros(n_ris))

    @property
    def coefficients(self) -> np.ndarray:
        """The complex reflection vector ``rho * exp(1j * phi)``."""
        return self.rho * np.exp(1j * self.phi)

    def wrapped(self) -> "RisConfig":
        return RisConfig(self.rho, wrap_phase(self.phi))


def wrap_phase(phi):
    """Map angles into ``[-pi, pi]``."""
    return np.angle(np.exp(1j * np.asarray(phi, dtype=float)))


def _check_index(k, n):
    if not 0 <= k < n:
        raise IndexError(f"user index {k} out of range for {n} users")


def sample_realization(cfg: ScenarioConfig, user_positions: np.ndarray,
                       rng: np.random.Generator) -> ChannelRealization:
    """Draw fading for all links and attach path losses for ``user_positions``."""
    positions = np.atleast_2d(user_positions)
    k = positions.shape[0]
    if k != cfg.n_users or positions.shape[1] != 3:
        raise ValueError(f"expected ({cfg.n_users}, 3) user positions, got {positions.shape}")
    n_b, n_r = cfg.n_bs_antennas, cfg.n_ris_elements
    H = crandn(rng, n_b, n_r)
    h = crandn(rng, k, n_r)
    h_d = crandn(rng, k, n_b)
    beta_r, beta_d = user_path_losses(cfg, positions)
    i_d, i_r = cfg.link_indicators()
    return ChannelRealization(H, h, h_d, beta_r, beta_d, i_r.copy(), i_d.copy())


def build_effective(real: ChannelRealization) -> EffectiveChannel:
    """Fold attenuation and blocking into ``D_k`` and ``g_d``."""
    amp_r = real.i_r * np.sqrt(real.beta_r)
    amp_d = real.i_d * np.sqrt(real.beta_d)
    # D[k, i, j] = H[i, j] * h[k, j]
    D = amp_r[:, None, None] * real.H[None, :, :] * real.h[:, None, :]
    g_d = amp_d[:, None] * real.h_d
    return EffectiveChannel(D, g_d)


def composite_channel(eff: EffectiveChannel, k: int, ris: RisConfig) -> np.ndarray:
    """Reflected plus direct channel of user ``k`` for the given RIS state."""
    _check_index(k, eff.n_users)
    return eff.D[k] @ ris.coefficients + eff.g_d[k]


def composite_channels(eff: EffectiveChannel, ris: RisConfig) -> np.ndarray:
    """All users' composite channels stacked as a ``(K, N_B)`` array."""
    return eff.D @ ris.coefficients + eff.g_d
