"""Synthetic scenario generation and offline-dataset assembly.

Real airport data cannot ship with the package, so episodes come from a
declared generative model: a three-regime weather Markov chain (VMC, MVMC,
IMC) drives per-quarter arrival capacity through a per-runway rate table,
and a two-peak demand profile places the scheduled arrivals.  Everything is
a deterministic function of the config seed.

The scripted expert plays the traffic manager whose behavior the offline
learners imitate: it reads the lookahead weather out of the observation and
sets each program rate to the capacity that weather implies (clamped to the
action range), i.e. a capacity-matching policy.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
import json

import numpy as np

from .data_model import (
    HORIZON,
    AirportQuarter,
    CEILING_BIN_EDGES,
    FlightRecord,
    GdpAdvisory,
    Scenario,
    ScopeKind,
    VISIBILITY_BIN_EDGES,
    build_scenario,
)
from .env import Action, EnvConfig, N_LOOKAHEAD, Observation, SagdpEnv
from .errors import ValidationError

AIRPORT = "APT"

REGIMES = ("VMC", "MVMC", "IMC")
PER_RUNWAY_RATE = {"VMC": 6, "MVMC": 5, "IMC": 4}  # arrivals per quarter per runway
HIGH_WIND_SPEED = 25.0  # above this, capacity drops by 1 per runway

DEFAULT_REGIME_TRANSITION = (
    (0.92, 0.06, 0.02),
    (0.30, 0.55, 0.15),
    (0.10, 0.30, 0.60),
)

# Demand profile: two gaussian bumps over the day, support clipped so no
# flight needs to depart before the GDP can be released.
PROFILE_FIRST_QUARTER = 15
PEAK_QUARTERS = (24, 56)
PEAK_WIDTHS = (5.0, 6.0)
PROFILE_BASELINE = 0.3

ENROUTE_RANGE = (2, 12)

NEAR_ORIGINS = (
    ("ABE", "ZNY", 88.0),
    ("PHL", "ZNY", 80.0),
    ("BDL", "ZBW", 116.0),
    ("BOS", "ZBW", 180.0),
    ("DCA", "ZDC", 170.0),
    ("RIC", "ZDC", 250.0),
    ("PIT", "ZOB", 280.0),
    ("CLE", "ZOB", 340.0),
)
FAR_ORIGINS = (
    ("MCO", "ZJX", 1010.0),
    ("MIA", "ZMA", 1090.0),
    ("DFW", "ZFW", 1370.0),
    ("DEN", "ZDV", 1600.0),
    ("SEA", "ZSE", 2400.0),
    ("LAX", "ZLA", 2450.0),
)
SCOPE_CENTERS = frozenset(c for _, c, _ in NEAR_ORIGINS)
SCOPE_DISTANCE_NM = 1000.0


@dataclass(frozen=True)
class GenConfig:
    """Knobs of the scenario generator; the seed determines everything."""

    seed: int
    n_flights: int = 240
    peak_demand_per_quarter: int = 10
    regime_transition: tuple = DEFAULT_REGIME_TRANSITION
    runway_count_range: tuple[int, int] = (1, 2)
    scope_mix: float = 0.75

    def __post_init__(self):
        if self.n_flights < 0 or self.peak_demand_per_quarter < 0:
            raise ValidationError("counts must be non-negative", field="n_flights")
        if not (0.0 <= self.scope_mix <= 1.0):
            raise ValidationError("scope_mix must lie in [0, 1]", field="scope_mix")
        lo, hi = self.runway_count_range
        if not (1 <= lo <= hi):
            raise ValidationError(
                "runway_count_range must satisfy 1 <= min <= max",
                field="runway_count_range",
            )
        mat = np.asarray(self.regime_transition, dtype=np.float64)
        if mat.shape != (3, 3) or (mat < 0).any():
            raise ValidationError(
                "regime_transition must be a non-negative 3x3 matrix",
                field="regime_transition",
            )
        if not np.allclose(mat.sum(axis=1), 1.0, atol=1e-9):
            raise ValidationError(
                "regime_transition rows must sum to 1", field="regime_transition"
            )


def capacity_from_weather(
    ceiling_bin: int, visibility_bin: int, runway_count: int, wind_speed: float
) -> int:
    """Quarterly arrival capacity implied by discretized weather.

    The binding regime is the worse of the two bins: bin 1 anywhere means
    IMC, bin 2 means marginal VMC, otherwise VMC.  High wind costs one
    arrival per runway; an open airport never drops below 1.
    """
    if not (1 <= ceiling_bin <= 4 and 1 <= visibility_bin <= 4):
        raise ValidationError("weather bins must lie in 1..4", field="bin")
    if runway_count < 1:
        raise ValidationError("runway_count must be >= 1", field="runway_count")
    worst = min(ceiling_bin, visibility_bin)
    regime = "IMC" if worst <= 1 else ("MVMC" if worst == 2 else "VMC")
    rate = PER_RUNWAY_RATE[regime] * runway_count
    if wind_speed > HIGH_WIND_SPEED:
        rate -= runway_count
    return max(1, rate)


def stationary_distribution(transition) -> np.ndarray:
    """Stationary row vector of a row-stochastic matrix, by power iteration."""
    mat = np.asarray(transition, dtype=np.float64)
    pi = np.full(3, 1.0 / 3.0)
    for _ in range(200):
        pi = pi @ mat
    return pi / pi.sum()


def _bins_for_regime(regime: int, rng: np.random.Generator) -> tuple[int, int]:
    if regime == 0:  # VMC: both bins benign
        return int(rng.integers(3, 5)), int(rng.integers(3, 5))
    floor = 2 if regime == 1 else 1
    if rng.integers(0, 2) == 0:
        return floor, int(rng.integers(floor, 5))
    return int(rng.integers(floor, 5)), floor


def _value_in_bin(edges, b: int, rng: np.random.Generator) -> float:
    lo = 0.0 if b == 1 else edges[b - 2]
    hi = edges[b - 1]
    u = rng.random()
    if b == 1:
        return lo + (hi - lo) * u  # [lo, hi)
    return hi - (hi - lo) * u  # (lo, hi]


def _demand_profile(peak: float) -> np.ndarray:
    q = np.arange(HORIZON, dtype=np.float64)
    w = np.full(HORIZON, PROFILE_BASELINE)
    for center, width in zip(PEAK_QUARTERS, PEAK_WIDTHS):
        w += peak * np.exp(-0.5 * ((q - center) / width) ** 2)
    w[:PROFILE_FIRST_QUARTER] = 0.0
    return w / w.sum()


def gen_scenario(config: GenConfig, *, gdp_override: GdpAdvisory | None = None) -> Scenario:
    """Draw one 80-quarter scenario; identical configs give identical scenarios.

    ``gdp_override`` substitutes the sampled advisory (used by tests that
    need a specific program window over generated weather and demand).
    """
    if config.n_flights == 0 and config.peak_demand_per_quarter > 0:
        raise ValidationError(
            "peak demand requires a non-empty flight list", field="n_flights"
        )
    rng = np.random.default_rng(config.seed)

    # Weather regime chain and per-quarter conditions.
    mat = np.asarray(config.regime_transition, dtype=np.float64)
    pi = stationary_distribution(mat)
    regime = int(rng.choice(3, p=pi))
    runway_count = int(rng.integers(config.runway_count_range[0], config.runway_count_range[1] + 1))
    ceil_vals = np.empty(HORIZON)
    vis_vals = np.empty(HORIZON)
    wind_angle = np.empty(HORIZON, dtype=np.int64)
    wind_speed = np.empty(HORIZON)
    arr_rate = np.empty(HORIZON, dtype=np.int64)
    for t in range(HORIZON):
        cb, vb = _bins_for_regime(regime, rng)
        ceil_vals[t] = _value_in_bin(CEILING_BIN_EDGES, cb, rng)
        vis_vals[t] = _value_in_bin(VISIBILITY_BIN_EDGES, vb, rng)
        wind_angle[t] = int(rng.integers(0, 360))
        wind_speed[t] = float(rng.gamma(2.0, 5.0))
        arr_rate[t] = capacity_from_weather(cb, vb, runway_count, wind_speed[t])
        regime = int(rng.choice(3, p=mat[regime]))

    # Flights: scheduled arrivals from the two-peak profile.
    profile = _demand_profile(float(config.peak_demand_per_quarter))
    sched_arr = rng.choice(HORIZON, size=config.n_flights, p=profile)
    sched_arr.sort(kind="stable")
    flights = []
    for i, arr in enumerate(sched_arr):
        enroute = int(rng.integers(ENROUTE_RANGE[0], ENROUTE_RANGE[1] + 1))
        near = rng.random() < config.scope_mix
        pool = NEAR_ORIGINS if near else FAR_ORIGINS
        origin, center, distance = pool[int(rng.integers(0, len(pool)))]
        flights.append(
            FlightRecord(
                flight_id=f"FLT{i:04d}",
                origin=origin,
                dest=AIRPORT,
                sched_dep=int(arr) - enroute,
                sched_arr=int(arr),
                actual_dep=None,
                enroute_quarters=enroute,
                origin_center=center,
                origin_distance_nm=distance,
            )
        )

    # Advisory: window over the congested span, scope kind split evenly.
    release = int(rng.integers(1, 4))
    start = int(rng.integers(8, 13))
    end = int(rng.integers(66, 73))
    if rng.integers(0, 2) == 0:
        gdp = GdpAdvisory(
            airport=AIRPORT,
            release_t=release,
            start_t=start,
            end_t=end,
            scope_kind=ScopeKind.DISTANCE,
            scope_distance_nm=SCOPE_DISTANCE_NM,
        )
    else:
        gdp = GdpAdvisory(
            airport=AIRPORT,
            release_t=release,
            start_t=start,
            end_t=end,
            scope_kind=ScopeKind.CENTERS,
            scope_centers=SCOPE_CENTERS,
        )
    if gdp_override is not None:
        gdp = gdp_override

    arr_hist = np.bincount(sched_arr, minlength=HORIZON)
    dep_lam = 0.5 + 0.8 * config.peak_demand_per_quarter * (
        np.exp(-0.5 * ((np.arange(HORIZON) - 18) / 6.0) ** 2)
        + np.exp(-0.5 * ((np.arange(HORIZON) - 50) / 7.0) ** 2)
    )
    dep_hist = rng.poisson(dep_lam)
    quarters = [
        AirportQuarter(
            t=t,
            arr_rate=int(arr_rate[t]),
            ceiling_100ft=float(ceil_vals[t]),
            wind_angle_deg=int(wind_angle[t]),
            wind_speed=float(wind_speed[t]),
            visibility_sm=float(vis_vals[t]),
            runway_count=runway_count,
            sched_arr_demand=int(arr_hist[t]),
            sched_dep_demand=int(dep_hist[t]),
        )
        for t in range(HORIZON)
    ]
    return build_scenario(quarters, flights, gdp, seed=config.seed)


def scripted_expert(obs: Observation, config: EnvConfig | None = None) -> Action:
    """Capacity-matching traffic manager: rate = weather-implied capacity.

    Zero-padded lookahead slots (past the episode horizon) get rate 0.
    """
    config = config or EnvConfig()
    rates = []
    for i in range(N_LOOKAHEAD):
        rw = int(obs.runway_count[i])
        if rw < 1:
            rates.append(0)
            continue
        cap = capacity_from_weather(
            int(obs.ceiling_bins[i]), int(obs.visibility_bins[i]), rw, float(obs.wind_speed[i])
        )
        rates.append(max(0, min(cap, config.paar_max)))
    return Action(tuple(rates))


@dataclass
class Dataset:
    """Offline transitions plus the per-dimension observation statistics."""

    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray
    obs_mean: np.ndarray
    obs_std: np.ndarray

    def __len__(self) -> int:
        return self.obs.shape[0]

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.obs_mean) / self.obs_std


def build_dataset(
    scenarios,
    policy,
    noise: int = 0,
    *,
    seed: int = 0,
    env_config: EnvConfig | None = None,
) -> Dataset:
    """Roll ``policy`` through every scenario and collect all transitions.

    ``policy`` maps an Observation to an action; ``noise`` adds seeded
    integer jitter of up to +/-noise to each rate (clamped to the action
    range) so the behavior data is not a single deterministic trajectory.
    """
    scenarios = list(scenarios)
    if not scenarios:
        raise ValidationError("need at least one scenario", field="scenarios")
    env_config = env_config or EnvConfig()
    act_of = policy.action if hasattr(policy, "action") else policy
    rng = np.random.default_rng(seed)
    obs_rows, act_rows, rew_rows, nxt_rows, done_rows = [], [], [], [], []
    env = SagdpEnv(scenarios[0], env_config)
    for scenario in scenarios:
        obs = env.reset(scenario)
        done = False
        while not done:
            action = np.asarray(Action.coerce(act_of(obs)).paar, dtype=np.int64)
            if noise:
                jitter = rng.integers(-noise, noise + 1, size=N_LOOKAHEAD)
                action = np.clip(action + jitter, 0, env_config.paar_max)
            result = env.step(action)
            obs_rows.append(obs.flatten())
            act_rows.append(action)
            rew_rows.append(result.reward)
            nxt_rows.append(result.obs.flatten())
            done_rows.append(result.done)
            obs = result.obs
            done = result.done
    obs_arr = np.asarray(obs_rows)
    mean = obs_arr.mean(axis=0)
    std = np.maximum(obs_arr.std(axis=0), 1e-6)
    return Dataset(
        obs=obs_arr,
        actions=np.asarray(act_rows, dtype=np.int64),
        rewards=np.asarray(rew_rows, dtype=np.float64),
        next_obs=np.asarray(nxt_rows),
        dones=np.asarray(done_rows, dtype=bool),
        obs_mean=mean,
        obs_std=std,
    )


DATASET_MAGIC = b"SAGDPDS1\n"


def save_dataset(dataset: Dataset, path) -> None:
    """Deterministic binary container: a JSON header line holding dimensions
    and the normalization stats, then the raw transition arrays."""
    path = Path(path)
    meta = {
        "n": int(len(dataset)),
        "obs_dim": int(dataset.obs.shape[1]),
        "act_dim": int(dataset.actions.shape[1]),
        "obs_mean": dataset.obs_mean.tolist(),
        "obs_std": dataset.obs_std.tolist(),
    }
    blob = bytearray(DATASET_MAGIC)
    blob += json.dumps(meta, sort_keys=True).encode() + b"\n"
    for arr, dtype in (
        (dataset.obs, "<f8"),
        (dataset.actions, "<i8"),
        (dataset.rewards, "<f8"),
        (dataset.next_obs, "<f8"),
        (dataset.dones, "u1"),
    ):
        blob += np.ascontiguousarray(arr, dtype=dtype).tobytes()
    path.write_bytes(bytes(blob))


def load_dataset(path) -> Dataset:
    raw = Path(path).read_bytes()
    if not raw.startswith(DATASET_MAGIC):
        raise ValidationError(f"{path}: not a dataset file", field="path")
    header_end = raw.index(b"\n", len(DATASET_MAGIC))
    meta = json.loads(raw[len(DATASET_MAGIC) : header_end])
    n, od, ad = meta["n"], meta["obs_dim"], meta["act_dim"]
    off = header_end + 1

    def take(count, dtype, shape):
        nonlocal off
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=off).reshape(shape)
        off += arr.nbytes
        return arr.copy()

    obs = take(n * od, "<f8", (n, od))
    actions = take(n * ad, "<i8", (n, ad))
    rewards = take(n, "<f8", (n,))
    next_obs = take(n * od, "<f8", (n, od))
    dones = take(n, "u1", (n,)).astype(bool)
    mean = np.asarray(meta["obs_mean"], dtype=np.float64)
    std = np.asarray(meta["obs_std"], dtype=np.float64)
    return Dataset(obs, actions, rewards, next_obs, dones, mean, std)
