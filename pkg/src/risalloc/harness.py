"""Monte Carlo comparison of the allocation methods.

Every trial draws its own user drop and channel realization from a
generator seeded by ``(seed, trial_index)`` alone, and all methods of a
trial see the same realization and the same random RIS phases. Output is
therefore independent of worker count and execution order.
"""

from __future__ import annotations

import math
import os
import time
from collections.abc import Mapping
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import partial

import numpy as np

from .channel import RisConfig, build_effective, sample_realization
from .mu_opt import (
    JointOptions,
    PowerAllocation,
    a_coeffs,
    joint_optimize,
    objective_log,
    phase_ascent,
    power_opt,
)
from .scenario import ScenarioConfig, sample_user_positions
from .su_opt import alternating_max, eval_snr, lb_max, matched_beamformer, ub_max

WORKERS_ENV = "RISALLOC_WORKERS"


class Method(str, Enum):
    NO_OPT = "NoOpt"
    UB_MAX = "UbMax"
    LB_MAX = "LbMax"
    AM = "Am"
    ONLY_RIS = "OnlyRis"
    ONLY_POWERS = "OnlyPowers"
    JOINT = "Joint"


SINGLE_USER_METHODS = (Method.NO_OPT, Method.UB_MAX, Method.LB_MAX, Method.AM)
MULTI_USER_METHODS = (Method.NO_OPT, Method.ONLY_RIS, Method.ONLY_POWERS, Method.JOINT)


@dataclass(frozen=True)
class TrialResult:
    trial_index: int
    method_id: Method
    metric: float  # dB
    wall_time: float

    def __post_init__(self):
        if not math.isfinite(self.metric):
            raise ValueError(f"non-finite metric for {self.method_id} in trial {self.trial_index}")
        object.__setattr__(self, "method_id", Method(self.method_id))


@dataclass(frozen=True, eq=False)
class CdfSeries:
    """Empirical CDF: ``P(X <= sorted_values[i]) = (i + 1) / N``."""

    sorted_values: np.ndarray

    @property
    def probabilities(self) -> np.ndarray:
        n = self.sorted_values.size
        return np.arange(1, n + 1) / n

    def __len__(self):
        return self.sorted_values.size

    def quantile(self, p: float) -> float:
        """Smallest sample whose empirical CDF value reaches ``p``."""
        if not 0 < p <= 1:
            raise ValueError("p must lie in (0, 1]")
        n = self.sorted_values.size
        idx = max(math.ceil(p * n - 1e-9) - 1, 0)
        return float(self.sorted_values[idx])

    @property
    def median(self) -> float:
        return float(np.median(self.sorted_values))


def cdf(samples) -> CdfSeries:
    values = np.asarray(samples, dtype=float).reshape(-1)
    if values.size == 0:
        raise ValueError("cannot build a CDF from no samples")
    return CdfSeries(np.sort(values))


class ExperimentResult(Mapping):
    """Per-method CDFs of one experiment, with the raw trial records kept.

    Indexing by method name (or :class:`Method`) yields its
    :class:`CdfSeries`.
    """

    def __init__(self, trials: list[TrialResult], methods):
        self.trials = sorted(trials, key=lambda r: (r.method_id.value, r.trial_index))
        self.methods = tuple(Method(m) for m in methods)

    def metrics(self, method) -> np.ndarray:
        """Per-trial metrics of ``method`` in trial order."""
        method = Method(method)
        rows = sorted((r for r in self.trials if r.method_id is method), key=lambda r: r.trial_index)
        return np.array([r.metric for r in rows])

    def __getitem__(self, method) -> CdfSeries:
        method = Method(method)
        if method not in self.methods:
            raise KeyError(method)
        return cdf(self.metrics(method))

    def __iter__(self):
        return iter(m.value for m in self.methods)

    def __len__(self):
        return len(self.methods)


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial_index,)))


def _to_db(linear: float) -> float:
    return 10.0 * math.log10(linear)


def _single_user_config(cfg: ScenarioConfig) -> ScenarioConfig:
    if cfg.n_users == 1:
        return cfg
    first = {name: (None if getattr(cfg, name) is None else getattr(cfg, name)[:1])
             for name in ("direct_links", "reflected_links")}
    return cfg.replace(n_users=1, **first)


def _timed(fn):
    start = time.perf_counter()
    value = fn()
    return value, time.perf_counter() - start


def single_user_trial(cfg: ScenarioConfig, seed: int, trial_index: int) -> list[TrialResult]:
    """Run the four single-user methods on one realization (``cfg`` must have K=1)."""
    rng = trial_rng(seed, trial_index)
    positions = sample_user_positions(cfg, rng)
    eff = build_effective(sample_realization(cfg, positions, rng))
    D, h_d = eff.user(0)
    rho, p_t, sigma2 = cfg.ris_loss_rho, cfg.p_max_watts, cfg.noise_power
    random_ris = RisConfig(rho, rng.uniform(-np.pi, np.pi, cfg.n_ris_elements))

    def no_opt():
        return eval_snr(D, h_d, random_ris, matched_beamformer(D, h_d, random_ris), p_t, sigma2)

    runs = {
        Method.NO_OPT: no_opt,
        Method.UB_MAX: lambda: ub_max(D, h_d, rho, p_t, sigma2).snr_linear,
        Method.LB_MAX: lambda: lb_max(D, h_d, rho, p_t, sigma2).snr_linear,
        Method.AM: lambda: alternating_max(D, h_d, rho, init=random_ris,
                                           p_t=p_t, sigma2=sigma2).snr_linear,
    }
    out = []
    for method, fn in runs.items():
        snr, elapsed = _timed(fn)
        out.append(TrialResult(trial_index, method, _to_db(snr), elapsed))
    return out


def multi_user_trial(cfg: ScenarioConfig, seed: int, trial_index: int,
                     opts: JointOptions | None = None) -> list[TrialResult]:
    """Run the four multiuser methods on one realization.

    The baselines and the joint optimizer share the random phase draw and
    the uniform power split as their starting point. Metrics are the
    geometric-mean SINR in dB.
    """
    opts = opts or JointOptions()
    rng = trial_rng(seed, trial_index)
    positions = sample_user_positions(cfg, rng)
    eff = build_effective(sample_realization(cfg, positions, rng))
    K, p_max, sigma2 = cfg.n_users, cfg.p_max_watts, cfg.noise_power
    random_ris = RisConfig(cfg.ris_loss_rho, rng.uniform(-np.pi, np.pi, cfg.n_ris_elements))
    uniform = PowerAllocation.uniform(K, p_max)

    def only_ris():
        ris, _ = phase_ascent(eff, random_ris, uniform, sigma2, opts.phase)
        return objective_log(eff, ris, uniform, sigma2)

    def only_powers():
        power, _ = power_opt(a_coeffs(eff, random_ris), sigma2, p_max, init=uniform, opts=opts.power)
        return objective_log(eff, random_ris, power, sigma2)

    def joint():
        state, _ = joint_optimize(eff, sigma2, p_max, init_ris=random_ris,
                                  init_power=uniform, opts=opts)
        return state.objective_log

    runs = {
        Method.NO_OPT: lambda: objective_log(eff, random_ris, uniform, sigma2),
        Method.ONLY_RIS: only_ris,
        Method.ONLY_POWERS: only_powers,
        Method.JOINT: joint,
    }
    out = []
    for method, fn in runs.items():
        g, elapsed = _timed(fn)
        # geometric mean in dB: 10 log10(2 ** (G / K))
        out.append(TrialResult(trial_index, method, 10.0 * math.log10(2.0) * g / K, elapsed))
    return out


def resolve_workers(workers: int | None = None) -> int:
    if workers is None:
        env = os.environ.get(WORKERS_ENV)
        workers = int(env) if env else 1
    if workers < 1:
        raise ValueError(f"worker count must be >= 1, got {workers}")
    return workers


def _run(trial_fn, n_trials: int, workers: int | None, order=None) -> list[TrialResult]:
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    indices = list(range(n_trials)) if order is None else list(order)
    workers = resolve_workers(workers)
    if workers == 1:
        batches = [trial_fn(t) for t in indices]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(trial_fn, indices))
    return [r for batch in batches for r in batch]


def run_single_user(cfg: ScenarioConfig, n_trials: int = 1000, seed: int = 0,
                    workers: int | None = None, order=None) -> ExperimentResult:
    """Single-user CDF experiment; the scenario is forced to one user.

    ``order`` optionally permutes the trial execution order (results are
    unaffected).
    """
    fn = partial(single_user_trial, _single_user_config(cfg), seed)
    return ExperimentResult(_run(fn, n_trials, workers, order), SINGLE_USER_METHODS)


def run_multi_user(cfg: ScenarioConfig, n_trials: int = 200, seed: int = 0,
                   workers: int | None = None, opts: JointOptions | None = None,
                   order=None) -> ExperimentResult:
    fn = partial(multi_user_trial, cfg, seed, opts=opts)
    return ExperimentResult(_run(fn, n_trials, workers, order), MULTI_USER_METHODS)
