"""Ration-by-schedule slot allocation and the cumulative arrival queue.

Capacity is bucketed per quarter hour (integer slots).  Exempt flights pin
their estimated arrival quarters first; controlled flights then ration the
remaining slots in ascending scheduled-arrival order (ties broken by
flight id), each taking the earliest quarter at or after its scheduled
arrival.  The queuing side folds planned arrivals against the actual
landing capacity: flights that cannot land stack in the terminal hold and
accrue one quarter of airborne delay per quarter held.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import kernels
from .data_model import FlightRecord
from .errors import InfeasibleAllocationError, ValidationError


@dataclass(frozen=True)
class SlotAssignment:
    """Arrival slots after one allocation pass.

    ``sched_arr`` and ``ground_delay_quarters`` cover controlled flights;
    exempt flights appear in ``assigned_arr`` with zero delay at their ETAs.
    """

    assigned_arr: dict[str, int]
    ground_delay_quarters: dict[str, int]
    sched_arr: dict[str, int]
    controlled_ids: tuple[str, ...]

    @property
    def total_ground_delay(self) -> int:
        return sum(self.ground_delay_quarters[i] for i in self.controlled_ids)


@dataclass(frozen=True)
class QueueStats:
    """Per-quarter delay accounting over a horizon.

    gd: flights held on the ground (scheduled but not yet slotted to arrive),
    ad: flights accruing airborne delay (equal to the end-of-quarter hold),
    nh: terminal-area holding stack size,
    act_arr: realized landings.
    """

    gd: np.ndarray
    ad: np.ndarray
    nh: np.ndarray
    act_arr: np.ndarray


def _capacity_array(paar, start: int, end: int) -> np.ndarray:
    """Materialize per-quarter capacity for start..end inclusive."""
    n = end - start + 1
    if n <= 0:
        raise ValidationError(f"empty allocation window [{start}, {end}]", field="window")
    out = np.empty(n, dtype=np.int64)
    if isinstance(paar, Mapping):
        for q in range(start, end + 1):
            if q not in paar:
                raise ValidationError(f"paar undefined for quarter {q}", field="paar")
            out[q - start] = int(paar[q])
    elif callable(paar):
        for q in range(start, end + 1):
            out[q - start] = int(paar(q))
    else:
        arr = np.asarray(paar, dtype=np.int64)
        if arr.shape[0] < n:
            raise ValidationError(
                f"paar array covers {arr.shape[0]} quarters, window needs {n}",
                field="paar",
            )
        out[:] = arr[:n]
    if (out < 0).any():
        raise ValidationError("paar capacities must be >= 0", field="paar")
    return out


def allocate_slots_rbs(
    controlled: Sequence[FlightRecord],
    exempt_etas: Mapping[str, int],
    paar: Mapping[int, int] | Callable[[int], int] | Sequence[int],
    window: tuple[int, int],
    *,
    earliest: Mapping[str, int] | None = None,
    allow_exempt_overflow: bool = False,
) -> SlotAssignment:
    """Ration-by-schedule allocation over per-quarter capacity buckets.

    ``window`` is the inclusive quarter span the capacities cover; every
    exempt ETA must be at or after its start.  ``earliest`` optionally lifts
    a controlled flight's first acceptable quarter above its scheduled
    arrival (used when re-planning mid-episode: an airborne-feasible arrival
    can never be earlier than "depart now").

    Exempt flights consume capacity at their ETAs first.  When they alone
    oversubscribe a quarter, the default is an :class:`InfeasibleAllocationError`
    naming the first saturated quarter; with ``allow_exempt_overflow`` the
    overflow is kept (exempt flights cannot be delayed) and controlled
    flights see zero remaining capacity there.
    """
    w_start, w_end = window
    capacity = _capacity_array(paar, w_start, w_end)

    etas = np.fromiter(
        (int(v) for v in exempt_etas.values()), dtype=np.int64, count=len(exempt_etas)
    )
    if etas.size and etas.min() < w_start:
        bad = min(k for k, v in exempt_etas.items() if v < w_start)
        raise ValidationError(
            f"exempt flight {bad} has ETA before window start {w_start}", field="exempt_etas"
        )
    pinned = kernels.count_by_quarter(etas, w_start, capacity.shape[0])
    residual = capacity - pinned
    if (residual < 0).any():
        if not allow_exempt_overflow:
            q = w_start + int(np.argmax(residual < 0))
            raise InfeasibleAllocationError(
                f"exempt demand alone exceeds capacity at quarter {q}", quarter=q
            )
        residual = np.maximum(residual, 0)

    order = sorted(controlled, key=lambda f: (f.sched_arr, f.flight_id))
    request = np.empty(len(order), dtype=np.int64)
    for k, f in enumerate(order):
        lo = max(f.sched_arr, w_start)
        if earliest is not None and f.flight_id in earliest:
            lo = max(lo, int(earliest[f.flight_id]))
        request[k] = lo
    assigned = kernels.assign_slots(request, residual, w_start)
    if (assigned < 0).any():
        k = int(np.argmax(assigned < 0))
        raise InfeasibleAllocationError(
            f"no capacity left for flight {order[k].flight_id} within window "
            f"[{w_start}, {w_end}]",
            quarter=w_end,
        )

    assigned_arr = {fid: int(eta) for fid, eta in exempt_etas.items()}
    delays = {fid: 0 for fid in exempt_etas}
    sched = {}
    for k, f in enumerate(order):
        assigned_arr[f.flight_id] = int(assigned[k])
        delays[f.flight_id] = int(assigned[k]) - f.sched_arr
        sched[f.flight_id] = f.sched_arr
    return SlotAssignment(
        assigned_arr=assigned_arr,
        ground_delay_quarters=delays,
        sched_arr=sched,
        controlled_ids=tuple(f.flight_id for f in order),
    )


def advance_arrival_queue(prev_nh: int, arrivals_due: int, arr_rate: int):
    """One quarter of the FCFS terminal stack.

    Returns (act_arr, new_nh, ad_count): landings are capped by capacity,
    the remainder stays in the hold, and every flight still airborne at the
    quarter end accrues one quarter of airborne delay.
    """
    if prev_nh < 0 or arrivals_due < 0 or arr_rate < 0:
        raise ValidationError("queue inputs must be non-negative integers")
    waiting = prev_nh + arrivals_due
    act_arr = min(waiting, arr_rate)
    new_nh = waiting - act_arr
    return act_arr, new_nh, new_nh


def queue_stats(
    assignment: SlotAssignment,
    enroute_arrivals: Sequence[int],
    arr_rate: Sequence[int],
    horizon: int,
    *,
    initial_nh: int = 0,
) -> QueueStats:
    """Cumulative queuing diagram over ``horizon`` quarters.

    Ground-delay counts cover controlled flights between their scheduled and
    assigned arrivals; assignments past the horizon keep the flight in the
    ground count through the horizon end.  Arrivals due each quarter are the
    slot-assigned landings plus the exogenous enroute stream, served FCFS at
    the actual capacity.
    """
    if horizon < 0 or horizon > 80:
        raise ValidationError(f"horizon {horizon} outside 0..80", field="horizon")
    enroute = np.asarray(enroute_arrivals, dtype=np.int64)
    rate = np.asarray(arr_rate, dtype=np.int64)
    if enroute.shape[0] < horizon or rate.shape[0] < horizon:
        raise ValidationError("enroute_arrivals and arr_rate must cover the horizon")

    n_ctl = len(assignment.controlled_ids)
    sched = np.empty(n_ctl, dtype=np.int64)
    ends = np.empty(n_ctl, dtype=np.int64)
    for k, fid in enumerate(assignment.controlled_ids):
        sched[k] = assignment.sched_arr[fid]
        ends[k] = assignment.assigned_arr[fid]
    gd = kernels.count_held(sched, ends, horizon)

    slotted = np.fromiter(
        (v for v in assignment.assigned_arr.values()),
        dtype=np.int64,
        count=len(assignment.assigned_arr),
    )
    due = kernels.count_by_quarter(slotted, 0, horizon) + enroute[:horizon]
    act, nh, ad = kernels.fold_queue(initial_nh, due, rate[:horizon])
    return QueueStats(gd=gd, ad=ad, nh=nh, act_arr=act)
