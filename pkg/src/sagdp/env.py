"""Episodic single-airport GDP environment.

One episode walks an airport through 80 quarter hours.  At each step the
agent posts program arrival rates (PAAR) for the next 8 quarters; the
latest revision covering a quarter wins.  From the release quarter onward
the environment re-runs ration-by-schedule over the still-on-ground
controlled flights against the effective rates, projects ground and
airborne delay over the lookahead window for the reward, then realizes the
next quarter: planned arrivals enter the terminal stack and land FCFS at
the actual (weather-determined) capacity.

Observations follow a fixed 122-value layout: two scalars (capacity and
landings at the current quarter), seven 8-wide lookahead tracks (weather
bins, wind, runways, demand), and the 8x8 upper-triangular matrix of
planned airborne flights.  Lookahead entries past quarter 79 are zero.

The per-step slot allocation runs on flat arrays through the kernel layer
for speed; tests assert it matches rbs_queue.allocate_slots_rbs on the
same inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import kernels
from .data_model import HORIZON, Scenario
from .errors import EpisodeDoneError, ValidationError
from .scope_filter import ControlClass, Partition, partition_flights

N_LOOKAHEAD = 8
OBS_SIZE = 2 + 7 * N_LOOKAHEAD + N_LOOKAHEAD * N_LOOKAHEAD  # = 122


@dataclass(frozen=True)
class RewardParams:
    """Cost model: per-minute delay costs plus a holding-congestion penalty."""

    qtr: float = 15.0  # minutes per quarter
    c_gnd: float = 1.0  # cost per ground-delay minute
    c_air: float = 2.5  # cost per airborne-delay minute
    p: float = 10.0  # penalty per holding flight above the benchmark
    n: int = N_LOOKAHEAD
    hold_benchmark: int = 10

    def __post_init__(self):
        if min(self.qtr, self.c_gnd, self.c_air, self.p) <= 0:
            raise ValidationError("reward parameters must be strictly positive")
        if self.c_air <= self.c_gnd:
            raise ValidationError("airborne delay must cost more than ground delay")
        if self.n != N_LOOKAHEAD:
            raise ValidationError(f"lookahead is fixed at {N_LOOKAHEAD} quarters")


@dataclass(frozen=True)
class EnvConfig:
    """Environment knobs: rate bounds and the reward cost model."""

    paar_max: int = 16
    default_paar: int = 12
    reward: RewardParams = field(default_factory=RewardParams)

    def __post_init__(self):
        if self.paar_max < 1:
            raise ValidationError("paar_max must be >= 1", field="paar_max")
        if not (1 <= self.default_paar <= self.paar_max):
            raise ValidationError(
                "default_paar must lie in 1..paar_max", field="default_paar"
            )


@dataclass(frozen=True)
class Action:
    """Program arrival rates for quarters t+1..t+8, chosen at quarter t."""

    paar: tuple[int, ...]

    def __post_init__(self):
        if len(self.paar) != N_LOOKAHEAD:
            raise ValidationError(
                f"action must hold {N_LOOKAHEAD} rates, got {len(self.paar)}",
                field="paar",
            )
        if any(r < 0 for r in self.paar):
            raise ValidationError("rates must be non-negative", field="paar")

    @classmethod
    def coerce(cls, value) -> "Action":
        if isinstance(value, Action):
            return value
        arr = np.asarray(value)
        if arr.dtype.kind == "f":
            if not np.all(arr == np.rint(arr)):
                raise ValidationError("rates must be integers", field="paar")
        return cls(tuple(int(v) for v in arr))


@dataclass(frozen=True)
class Observation:
    """Structured state; flatten() gives the canonical 122-value vector."""

    arr_rate: float
    act_arr: float
    ceiling_bins: np.ndarray
    wind_angle: np.ndarray
    wind_speed: np.ndarray
    visibility_bins: np.ndarray
    runway_count: np.ndarray
    arr_demand: np.ndarray
    dep_demand: np.ndarray
    enroute: np.ndarray

    def flatten(self) -> np.ndarray:
        return np.concatenate(
            [
                np.array([self.arr_rate, self.act_arr], dtype=np.float64),
                self.ceiling_bins,
                self.wind_angle,
                self.wind_speed,
                self.visibility_bins,
                self.runway_count,
                self.arr_demand,
                self.dep_demand,
                self.enroute.reshape(-1),
            ]
        ).astype(np.float64)


@dataclass(frozen=True)
class StepResult:
    obs: Observation
    reward: float
    done: bool
    info: dict


def compute_reward(gd, ad, nh: int, params: RewardParams) -> float:
    """Negative cost of the lookahead delay plus the clamped holding penalty.

    The penalty applies only above the benchmark (max with zero); the raw
    difference would pay the agent for keeping the terminal area empty.
    """
    gd = np.asarray(gd, dtype=np.float64)
    ad = np.asarray(ad, dtype=np.float64)
    if gd.shape[0] != params.n or ad.shape[0] != params.n:
        raise ValidationError(f"gd and ad must hold {params.n} counts")
    if (gd < 0).any() or (ad < 0).any() or nh < 0:
        raise ValidationError("delay counts must be non-negative")
    delay_cost = params.qtr * float(np.sum(params.c_gnd * gd + params.c_air * ad))
    congestion = params.p * max(0.0, float(nh) - params.hold_benchmark)
    return -(delay_cost + congestion)


def effective_paar(
    revisions: Sequence[tuple[int, Sequence[int]]], q: int, default_paar: int
) -> int:
    """Rate in force for quarter ``q``: the latest revision covering it, else the default."""
    rate = default_paar
    best = None
    for dec_t, paar in revisions:
        if dec_t + 1 <= q <= dec_t + N_LOOKAHEAD and (best is None or dec_t > best):
            best = dec_t
            rate = int(paar[q - dec_t - 1])
    return rate


class SagdpEnv:
    """Single-scenario episodic environment; not safe to share across threads.

    Usage: ``env = SagdpEnv(scenario); obs = env.reset(); env.step(action)``.
    A trajectory is exactly 80 steps (decisions at quarters 0..79); the 80th
    step returns ``done=True`` and further steps raise.
    """

    def __init__(
        self,
        scenario: Scenario,
        config: EnvConfig | None = None,
        forecast_noise=None,
    ):
        """``forecast_noise`` optionally perturbs the lookahead weather block
        before it enters the observation: a callable ``(block, t) -> block``
        over the (8, 5) array of [ceiling_bin, wind_angle, wind_speed,
        visibility_bin, runway_count] rows.  Default is the scenario truth."""
        self.config = config or EnvConfig()
        self.forecast_noise = forecast_noise
        self._load(scenario)
        self._started = False

    def _load(self, scenario: Scenario) -> None:
        self.scenario = scenario
        self._arr_rate = np.array([q.arr_rate for q in scenario.quarters], dtype=np.int64)
        # Lookahead tracks, padded so slices past quarter 79 read zeros.
        pad = np.zeros((N_LOOKAHEAD, 5))
        block = np.array(
            [
                [q.ceiling_bin, q.wind_angle_deg, q.wind_speed, q.visibility_bin, q.runway_count]
                for q in scenario.quarters
            ],
            dtype=np.float64,
        )
        self._weather = np.vstack([block, pad])
        self._dep_demand = np.concatenate(
            [
                np.array([q.sched_dep_demand for q in scenario.quarters], dtype=np.float64),
                np.zeros(N_LOOKAHEAD),
            ]
        )

        inbound = [f for f in scenario.flights if f.dest == scenario.airport]
        ids = [f.flight_id for f in inbound]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate flight_id among inbound flights", field="flight_id")
        release = scenario.gdp.release_t
        natural_dep, keep = [], []
        for f in inbound:
            dep = f.actual_dep if f.actual_dep is not None else f.sched_dep
            if dep + f.enroute_quarters < 0:
                continue  # landed before the window; no interaction with the episode
            natural_dep.append(dep)
            keep.append(f)
        inbound = keep
        self._flights = inbound
        self._ids = [f.flight_id for f in inbound]
        self._sched_arr = np.array([f.sched_arr for f in inbound], dtype=np.int64)
        self._sched_dep = np.array([f.sched_dep for f in inbound], dtype=np.int64)
        self._enroute_q = np.array([f.enroute_quarters for f in inbound], dtype=np.int64)
        self._natural_dep = np.array(natural_dep, dtype=np.int64)
        self._natural_eta = self._natural_dep + self._enroute_q

        # Partition per the release-quarter contract.  A flight without an
        # actual departure whose schedule puts it in the air before release
        # is treated as having departed on schedule (clamped into the window).
        classify_input = []
        for f in inbound:
            if f.actual_dep is None and f.sched_dep < release:
                f = replace(f, actual_dep=max(0, f.sched_dep))
            classify_input.append(f)
        self.partition: Partition = partition_flights(
            classify_input, scenario.gdp, now=release
        )
        self._controlled = np.array(
            [fc.control is ControlClass.CONTROLLED for fc in self.partition.classes],
            dtype=bool,
        )
        ctl_idx = np.flatnonzero(self._controlled)
        order = sorted(ctl_idx, key=lambda i: (int(self._sched_arr[i]), self._ids[i]))
        self._controlled_order = np.array(order, dtype=np.int64)

        # The rate table must cover the latest possible slot request: a flight
        # re-planned at quarter 79 cannot arrive before 79 + its flight time.
        n = len(inbound)
        latest_request = HORIZON
        if n:
            latest_request = max(
                HORIZON,
                int(self._sched_arr.max()) + 1,
                HORIZON - 1 + int(self._enroute_q.max()) + 1,
            )
        self._table_len = latest_request + N_LOOKAHEAD + n + 1
        self._n_flights = n

    # -- episode control -------------------------------------------------

    def reset(self, scenario: Scenario | None = None) -> Observation:
        if scenario is not None:
            self._load(scenario)
        self._t = 0
        self._done = False
        self._started = True
        self._act_arr = 0
        self._nh = int(np.count_nonzero(self._natural_eta == 0))
        self._eta = self._natural_eta.copy()
        self._dep = self._natural_dep.copy()
        self._paar_table = np.full(self._table_len, self.config.default_paar, dtype=np.int64)
        self._revisions: list[tuple[int, tuple[int, ...]]] = []
        self.trace: list[dict] = []
        return self._observe()

    @property
    def t(self) -> int:
        return self._t

    @property
    def done(self) -> bool:
        return self._done

    @property
    def revisions(self) -> tuple[tuple[int, tuple[int, ...]], ...]:
        return tuple(self._revisions)

    def paar_in_force(self) -> np.ndarray:
        """Latest-revision-wins rate per quarter 0..79 (default where never set)."""
        return self._paar_table[:HORIZON].copy()

    def step(self, action) -> StepResult:
        if not self._started:
            raise ValidationError("reset() must be called before step()")
        if self._done:
            raise EpisodeDoneError("episode already finished")
        act = Action.coerce(action)
        if max(act.paar) > self.config.paar_max:
            raise ValidationError(
                f"rate {max(act.paar)} exceeds paar_max {self.config.paar_max}",
                field="paar",
            )
        t = self._t
        self._revisions.append((t, act.paar))
        self._paar_table[t + 1 : t + 1 + N_LOOKAHEAD] = act.paar

        if t >= self.scenario.gdp.release_t:
            self._replan()

        gd_proj, ad_proj, gd_plan_quarters = self._project()
        reward = compute_reward(gd_proj, ad_proj, self._nh, self.config.reward)
        gd_now = int(
            np.count_nonzero(
                self._controlled
                & (self._sched_arr <= t)
                & (self._eta > t)
            )
        )
        record = {
            "t": t,
            "action": [int(v) for v in act.paar],
            "effective_paar": [int(v) for v in self._paar_table[t + 1 : t + 1 + N_LOOKAHEAD]],
            "gd": [int(v) for v in gd_proj],
            "ad": [int(v) for v in ad_proj],
            "nh": int(self._nh),
            "reward": reward,
            "act_arr": int(self._act_arr),
            "gd_now": gd_now,
            "gd_plan_quarters": gd_plan_quarters,
        }
        self.trace.append(record)

        done = t == HORIZON - 1
        if done:
            self._done = True
            obs = _zero_observation()
        else:
            q = t + 1
            due = int(np.count_nonzero(self._eta == q))
            landed = min(self._nh + due, int(self._arr_rate[q]))
            self._nh = self._nh + due - landed
            self._act_arr = landed
            self._t = q
            obs = self._observe()
        info = {
            "gd": gd_proj,
            "ad": ad_proj,
            "nh": record["nh"],
            "effective_paar": np.array(record["effective_paar"], dtype=np.int64),
            "gd_now": gd_now,
            "act_arr": record["act_arr"],
        }
        return StepResult(obs=obs, reward=reward, done=done, info=info)

    # -- internals ---------------------------------------------------------

    def _replan(self) -> None:
        """Re-run RBS for controlled flights still on the ground at quarter t."""
        t = self._t
        replan = self._controlled & (self._dep >= t)
        sel = self._controlled_order[replan[self._controlled_order]]
        if sel.size == 0:
            return
        pinned_mask = (~replan) & (self._eta >= t + 1)
        capacity = self._paar_table[t + 1 :].copy()
        pinned = kernels.count_by_quarter(self._eta[pinned_mask], t + 1, capacity.shape[0])
        np.maximum(capacity - pinned, 0, out=capacity)
        request = np.maximum(
            self._sched_arr[sel],
            np.maximum(self._sched_dep[sel], t) + self._enroute_q[sel],
        )
        assigned = kernels.assign_slots(request, capacity, t + 1)
        if (assigned < 0).any():
            # Table length covers worst-case demand at >=1 default slot per
            # quarter, so this would mean the sizing invariant broke.
            raise ValidationError("slot table exhausted during re-planning")
        self._eta[sel] = assigned
        self._dep[sel] = assigned - self._enroute_q[sel]

    def _project(self) -> tuple[np.ndarray, np.ndarray, int]:
        """Projected gd/ad for quarters t+1..t+8 plus the plan's total gd quarters."""
        t = self._t
        gd8 = np.zeros(N_LOOKAHEAD, dtype=np.int64)
        ad8 = np.zeros(N_LOOKAHEAD, dtype=np.int64)
        gd_full = kernels.count_held(
            self._sched_arr[self._controlled], self._eta[self._controlled], HORIZON
        )
        n_in = min(N_LOOKAHEAD, HORIZON - 1 - t)
        if n_in > 0:
            gd8[:n_in] = gd_full[t + 1 : t + 1 + n_in]
            due = kernels.count_by_quarter(self._eta, t + 1, n_in)
            _, _, ad = kernels.fold_queue(self._nh, due, self._arr_rate[t + 1 : t + 1 + n_in])
            ad8[:n_in] = ad
        return gd8, ad8, int(gd_full.sum())

    def _observe(self) -> Observation:
        t = self._t
        look = self._weather[t + 1 : t + 1 + N_LOOKAHEAD]
        if self.forecast_noise is not None:
            look = np.asarray(self.forecast_noise(look.copy(), t), dtype=np.float64)
        arr_demand = kernels.count_by_quarter(
            self._eta, t + 1, N_LOOKAHEAD
        ).astype(np.float64)
        if t + N_LOOKAHEAD >= HORIZON:  # zero out lookahead demand past the horizon
            cut = max(0, HORIZON - 1 - t)
            arr_demand[cut:] = 0.0
        enroute = kernels.enroute_matrix(
            self._dep, self._eta, t, N_LOOKAHEAD, HORIZON - 1
        ).astype(np.float64)
        return Observation(
            arr_rate=float(self._arr_rate[t]),
            act_arr=float(self._act_arr),
            ceiling_bins=look[:, 0].copy(),
            wind_angle=look[:, 1].copy(),
            wind_speed=look[:, 2].copy(),
            visibility_bins=look[:, 3].copy(),
            runway_count=look[:, 4].copy(),
            arr_demand=arr_demand,
            dep_demand=self._dep_demand[t + 1 : t + 1 + N_LOOKAHEAD].copy(),
            enroute=enroute,
        )

    # -- report helpers ----------------------------------------------------

    def planned_arrivals(self) -> np.ndarray:
        """Histogram of currently planned arrivals over quarters 0..79."""
        return kernels.count_by_quarter(self._eta, 0, HORIZON)

    def ground_delay_profile(self) -> np.ndarray:
        """Per-quarter count of controlled flights held on the ground, current plan."""
        return kernels.count_held(
            self._sched_arr[self._controlled], self._eta[self._controlled], HORIZON
        )

    def flight_plan(self) -> dict[str, tuple[int, int]]:
        """flight_id -> (planned departure quarter, planned arrival quarter)."""
        return {
            fid: (int(d), int(e)) for fid, d, e in zip(self._ids, self._dep, self._eta)
        }


def _zero_observation() -> Observation:
    z = np.zeros(N_LOOKAHEAD)
    return Observation(
        arr_rate=0.0,
        act_arr=0.0,
        ceiling_bins=z.copy(),
        wind_angle=z.copy(),
        wind_speed=z.copy(),
        visibility_bins=z.copy(),
        runway_count=z.copy(),
        arr_demand=z.copy(),
        dep_demand=z.copy(),
        enroute=np.zeros((N_LOOKAHEAD, N_LOOKAHEAD)),
    )
