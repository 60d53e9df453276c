"""Pure-Python (numpy) implementations of the hot simulation kernels.

This is the fallback selected when the compiled extension is unavailable
(or when ``SAGDP_PURE_PY=1``).  Both backends take and return int64 numpy
arrays and must be arithmetically identical; see tests/test_kernels.py for
the parity suite and benchmarks/bench_kernels.py for the speed comparison.
"""

from __future__ import annotations

import numpy as np


def assign_slots(request: np.ndarray, capacity: np.ndarray, base: int) -> np.ndarray:
    """Greedy first-fit slot assignment in the given processing order.

    ``request[k]`` is the earliest acceptable quarter for the k-th flight;
    ``capacity[q - base]`` is the number of slots left in quarter ``q`` and is
    consumed in place.  Returns the assigned quarter per flight, or -1 where
    no capacity exists at or after the request within the capacity span.
    """
    m = capacity.shape[0]
    assigned = np.empty(request.shape[0], dtype=np.int64)
    for k in range(request.shape[0]):
        q = int(request[k]) - base
        if q < 0:
            q = 0
        while q < m and capacity[q] == 0:
            q += 1
        if q >= m:
            assigned[k] = -1
        else:
            capacity[q] -= 1
            assigned[k] = q + base
    return assigned


def count_held(start: np.ndarray, end: np.ndarray, horizon: int) -> np.ndarray:
    """Per-quarter count of intervals [start, end) covering each q in [0, horizon)."""
    diff = np.zeros(horizon + 1, dtype=np.int64)
    lo = np.clip(start, 0, horizon)
    hi = np.clip(end, 0, horizon)
    keep = hi > lo
    np.add.at(diff, lo[keep], 1)
    np.add.at(diff, hi[keep], -1)
    return np.cumsum(diff[:horizon])


def fold_queue(initial_nh: int, due: np.ndarray, rate: np.ndarray):
    """FCFS terminal stack: land min(stack + due, rate) each quarter.

    Returns (act_arr, nh, ad) per quarter; ad equals the end-of-quarter stack
    (each flight still airborne accrues one quarter of airborne delay).
    """
    m = due.shape[0]
    act = np.empty(m, dtype=np.int64)
    nh = np.empty(m, dtype=np.int64)
    stack = int(initial_nh)
    for q in range(m):
        waiting = stack + int(due[q])
        landed = min(waiting, int(rate[q]))
        act[q] = landed
        stack = waiting - landed
        nh[q] = stack
    return act, nh, nh.copy()


def count_by_quarter(values: np.ndarray, base: int, m: int) -> np.ndarray:
    """Histogram of ``values`` over quarters base..base+m-1; out-of-range dropped."""
    out = np.zeros(m, dtype=np.int64)
    shifted = values - base
    keep = (shifted >= 0) & (shifted < m)
    np.add.at(out, shifted[keep], 1)
    return out


def enroute_matrix(
    dep: np.ndarray, eta: np.ndarray, t: int, n_look: int, last_q: int
) -> np.ndarray:
    """Upper-triangular lookahead matrix of planned airborne flights.

    Entry (i-1, j-1), for 1 <= i <= j <= n_look, counts flights with planned
    arrival at quarter t+j that will have departed by quarter t+i.  Columns
    past ``last_q`` stay zero.
    """
    hi = min(t + n_look, last_q)
    keep = (eta >= t + 1) & (eta <= hi) & (dep <= eta)
    j = eta[keep] - t  # 1..n_look
    imin = np.maximum(dep[keep] - t, 1)  # 1..j
    diff = np.zeros((n_look + 1, n_look), dtype=np.int64)
    np.add.at(diff, (imin - 1, j - 1), 1)
    np.add.at(diff, (j, j - 1), -1)
    return np.cumsum(diff[:n_look], axis=0)
