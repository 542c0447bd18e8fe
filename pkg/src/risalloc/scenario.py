"""Static simulation scenario: geometry, array sizes, RF budget, path loss.

The config file format is a flat YAML mapping whose keys are the field
names of :class:`ScenarioConfig`. Absent keys take the defaults below.
Points are written as 3-element lists, the user region as
``[x_min, x_max, y_min, y_max]``::

    n_users: 4
    bs_position: [0.0, 0.0, 25.0]
    ris_loss_rho: 0.9
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

THERMAL_NOISE_DBM_HZ = -174.0


class ConfigError(ValueError):
    """Raised when a scenario config is malformed or violates an invariant."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Geometry and RF parameters of one RIS-assisted cell.

    BS and RIS sit on the x axis about 100 m apart; users are dropped in a
    rectangle on the RIS side, 40-95 m from both, so the reflected path
    is not swamped by the direct one. ``carrier_hz`` is informational only: the path
    loss model is frequency independent.

    ``direct_links`` / ``reflected_links`` are per-user 0/1 blocking
    indicators; ``None`` means every link exists.
    """

    bs_position: tuple[float, float, float] = (0.0, 0.0, 25.0)
    ris_position: tuple[float, float, float] = (100.0, 0.0, 40.0)
    user_region: tuple[float, float, float, float] = (60.0, 90.0, -20.0, 20.0)
    user_height: float = 1.5
    n_bs_antennas: int = 16
    n_ris_elements: int = 32
    n_users: int = 10
    carrier_hz: float = 3e9
    bandwidth_hz: float = 20e6
    noise_figure_db: float = 9.0
    ris_loss_rho: float = 1.0
    p_max_watts: float = 10.0
    pathloss_const_exp: float = 3.53
    pathloss_distance_exp: float = 3.76
    direct_links: tuple[int, ...] | None = field(default=None)
    reflected_links: tuple[int, ...] | None = field(default=None)

    def __post_init__(self):
        # normalize list inputs (e.g. from YAML) into hashable tuples
        for name in ("bs_position", "ris_position", "user_region",
                     "direct_links", "reflected_links"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, tuple):
                object.__setattr__(self, name, tuple(value))
        self._validate()

    def _validate(self):
        for name in ("bs_position", "ris_position", "user_region"):
            if not all(_is_real(v) for v in getattr(self, name)):
                raise ConfigError(f"{name} entries must be numbers, got {getattr(self, name)!r}")
        for name in _REAL_FIELDS:
            if not _is_real(getattr(self, name)):
                raise ConfigError(f"{name} must be a number, got {getattr(self, name)!r}")
        if len(self.bs_position) != 3 or len(self.ris_position) != 3:
            raise ConfigError("bs_position and ris_position must be 3D points")
        if len(self.user_region) != 4:
            raise ConfigError("user_region must be [x_min, x_max, y_min, y_max]")
        x0, x1, y0, y1 = self.user_region
        if x0 > x1 or y0 > y1:
            raise ConfigError(f"user_region has inverted bounds: {self.user_region}")
        for name in ("n_bs_antennas", "n_ris_elements", "n_users"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        for name in ("carrier_hz", "bandwidth_hz", "p_max_watts"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.ris_loss_rho <= 1:
            raise ConfigError(f"ris_loss_rho must lie in (0, 1], got {self.ris_loss_rho}")
        if not self.user_height < min(self.bs_position[2], self.ris_position[2]):
            raise ConfigError("user region must lie strictly below the BS and the RIS")
        for name in ("direct_links", "reflected_links"):
            links = getattr(self, name)
            if links is None:
                continue
            if len(links) != self.n_users:
                raise ConfigError(f"{name} needs one entry per user ({self.n_users})")
            if any(v not in (0, 1) for v in links):
                raise ConfigError(f"{name} entries must be 0 or 1")
        i_d, i_r = self.link_indicators()
        if np.any((i_d == 0) & (i_r == 0)):
            raise ConfigError("a user with both links blocked is unreachable")

    def link_indicators(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (direct, reflected) 0/1 indicator arrays of length K."""
        ones = np.ones(self.n_users, dtype=int)
        i_d = ones if self.direct_links is None else np.asarray(self.direct_links, dtype=int)
        i_r = ones if self.reflected_links is None else np.asarray(self.reflected_links, dtype=int)
        return i_d, i_r

    @property
    def noise_power(self) -> float:
        return noise_power(self.bandwidth_hz, self.noise_figure_db)

    @property
    def bs_ris_distance(self) -> float:
        return float(np.linalg.norm(np.subtract(self.bs_position, self.ris_position)))

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out


_REAL_FIELDS = ("user_height", "carrier_hz", "bandwidth_hz", "noise_figure_db", "ris_loss_rho",
                "p_max_watts", "pathloss_const_exp", "pathloss_distance_exp")


def _is_real(value) -> bool:
    return isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool)


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot or sign, e.g. ``20e6``."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*(?:\.[0-9_]*)?|\.[0-9_]+)[eE][-+]?[0-9]+$"),
    list("-+0123456789."),
)


def load_config(path) -> ScenarioConfig:
    """Read a flat YAML mapping into a :class:`ScenarioConfig`.

    Raises
    ------
    ConfigError
        On a missing file, a parse failure, unknown keys or invalid values.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a flat key-value mapping")
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for key, value in data.items():
        if isinstance(value, dict):
            raise ConfigError(f"config key {key!r} must not be nested")
    try:
        return ScenarioConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)


def noise_power(bandwidth_hz: float, noise_figure_db: float) -> float:
    """Thermal noise power in watts for a receiver of the given bandwidth.

    ``-174 dBm/Hz + 10 log10(B) + NF``, converted from dBm to watts.
    """
    if not bandwidth_hz > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth_hz}")
    dbm = THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(bandwidth_hz) + noise_figure_db
    return 10.0 ** ((dbm - 30.0) / 10.0)


def path_loss_direct(d_bs_k: float, const_exp: float = 3.53,
                     distance_exp: float = 3.76) -> float:
    """Linear power attenuation of the BS-user link at distance ``d_bs_k`` m."""
    if not d_bs_k > 0:
        raise ValueError(f"distance must be positive, got {d_bs_k}")
    return 10.0 ** (-const_exp) / d_bs_k ** distance_exp


def path_loss_reflected(d_bs_ris: float, d_ris_k: float, const_exp: float = 3.53,
                        distance_exp: float = 3.76) -> float:
    """Linear power attenuation of the BS-RIS-user path.

    The two hops enter through the sum of their lengths.
    """
    if not (d_bs_ris > 0 and d_ris_k > 0):
        raise ValueError(f"distances must be positive, got {d_bs_ris}, {d_ris_k}")
    return 10.0 ** (-const_exp) / (d_bs_ris + d_ris_k) ** distance_exp


def sample_user_positions(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Drop ``cfg.n_users`` users uniformly in the user region.

    Returns a ``(K, 3)`` array; the z coordinate is ``cfg.user_height``.
    """
    x0, x1, y0, y1 = cfg.user_region
    u = rng.random((cfg.n_users, 2))
    # x0 + u*(x1-x0) can round past x1; clip keeps the bounds exact
    xs = np.clip(x0 + u[:, 0] * (x1 - x0), x0, x1)
    ys = np.clip(y0 + u[:, 1] * (y1 - y0), y0, y1)
    zs = np.full(cfg.n_users, float(cfg.user_height))
    return np.column_stack([xs, ys, zs])


def user_path_losses(cfg: ScenarioConfig, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (beta_reflected, beta_direct) for every user position."""
    positions = np.atleast_2d(positions)
    d_bs = np.linalg.norm(positions - np.asarray(cfg.bs_position), axis=1)
    d_ris = np.linalg.norm(positions - np.asarray(cfg.ris_position), axis=1)
    d_link = cfg.bs_ris_distance
    beta_r = np.array([path_loss_reflected(d_link, d, cfg.pathloss_const_exp,
                                           cfg.pathloss_distance_exp) for d in d_ris])
    beta_d = np.array([path_loss_direct(d, cfg.pathloss_const_exp,
                                        cfg.pathloss_distance_exp) for d in d_bs])
    return beta_r, beta_d
