"""Learning-curve and GDP replay reports (CSV tables + hand-rolled SVG).

Charts are written as plain SVG text so outputs stay diffable and
byte-reproducible: fixed float formatting, no timestamps, no library
version strings.  Delay-hour totals are derived from integer quarter
counts (x 15/60) and always reconcile with the episode trace.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .agents import select_action
from .data_model import HORIZON, Scenario
from .env import EnvConfig, SagdpEnv
from .errors import ValidationError
from .scope_filter import ControlClass

QUARTER_HOURS = 15.0 / 60.0


def write_trace_jsonl(trace, path) -> None:
    """One JSON object per step: t, action, effective_paar, gd, ad, nh, reward, ..."""
    lines = [json.dumps(record, sort_keys=True) for record in trace]
    Path(path).write_text("\n".join(lines) + "\n")


def read_trace_jsonl(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line]


# --- minimal SVG ------------------------------------------------------------


def _f(x: float) -> str:
    return f"{x:.2f}"


class SvgCanvas:
    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.parts: list[str] = []

    def rect(self, x, y, w, h, fill, opacity=None):
        op = f' fill-opacity="{_f(opacity)}"' if opacity is not None else ""
        self.parts.append(
            f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" fill="{fill}"{op}/>'
        )

    def line(self, x1, y1, x2, y2, stroke, width=1.0):
        self.parts.append(
            f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
            f'stroke="{stroke}" stroke-width="{_f(width)}"/>'
        )

    def polyline(self, points, stroke, width=1.5):
        pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in points)
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
            f'stroke-width="{_f(width)}"/>'
        )

    def polygon(self, points, fill, opacity=0.25):
        pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in points)
        self.parts.append(
            f'<polygon points="{pts}" fill="{fill}" fill-opacity="{_f(opacity)}" stroke="none"/>'
        )

    def circle(self, x, y, r, fill):
        self.parts.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="{_f(r)}" fill="{fill}"/>')

    def text(self, x, y, content, size=12, anchor="start", fill="#333333"):
        self.parts.append(
            f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" font-family="sans-serif" '
            f'text-anchor="{anchor}" fill="{fill}">{content}</text>'
        )

    def render(self) -> str:
        body = "\n".join(self.parts)
        return (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
            f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="white"/>\n'
            f"{body}\n</svg>\n"
        )


class _Panel:
    """Maps data coordinates into one rectangular plot area."""

    def __init__(self, canvas, x, y, w, h, x_range, y_range, title=""):
        self.c = canvas
        self.x, self.y, self.w, self.h = x, y, w, h
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        canvas.rect(x, y, w, h, "none")
        canvas.line(x, y + h, x + w, y + h, "#888888")
        canvas.line(x, y, x, y + h, "#888888")
        if title:
            canvas.text(x, y - 6, title, size=13)

    def px(self, vx) -> float:
        return self.x + (vx - self.x0) / (self.x1 - self.x0) * self.w

    def py(self, vy) -> float:
        return self.y + self.h - (vy - self.y0) / (self.y1 - self.y0) * self.h

    def bars(self, xs, heights, fill, base=None, frac=0.8):
        width = self.w / (self.x1 - self.x0) * frac
        for vx, vh in zip(xs, heights):
            b = 0.0 if base is None else base[int(vx) - int(xs[0])]
            if vh <= 0:
                continue
            y_top = self.py(b + vh)
            self.c.rect(self.px(vx) - width / 2.0, y_top, width, self.py(b) - y_top, fill)

    def steps(self, xs, values, stroke, width=1.5):
        pts = []
        half = 0.5
        for vx, vv in zip(xs, values):
            pts.append((self.px(vx - half), self.py(vv)))
            pts.append((self.px(vx + half), self.py(vv)))
        self.c.polyline(pts, stroke, width)

    def axis_labels(self, x_label, y_label):
        self.c.text(self.x + self.w / 2.0, self.y + self.h + 26, x_label, anchor="middle")
        self.c.text(self.x - 28, self.y - 6, y_label, size=11)

    def x_ticks(self, ticks):
        for v in ticks:
            self.c.line(self.px(v), self.y + self.h, self.px(v), self.y + self.h + 4, "#888888")
            self.c.text(self.px(v), self.y + self.h + 16, str(v), size=10, anchor="middle")

    def y_ticks(self, ticks):
        for v in ticks:
            self.c.line(self.x - 4, self.py(v), self.x, self.py(v), "#888888")
            self.c.text(self.x - 7, self.py(v) + 4, f"{v:g}", size=10, anchor="end")


def _y_tick_values(lo: float, hi: float, n: int = 4) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = float(np.ceil(raw / mag) * mag)
    first = float(np.ceil(lo / step) * step)
    out = []
    v = first
    while v <= hi + 1e-9:
        out.append(round(v, 9))
        v += step
    return out


# --- learning curve ----------------------------------------------------------


def emit_learning_curve(log_rows, csv_path, svg_path) -> int:
    """CSV (iter, mean, std) plus an SVG with the mean line and +/-1 std band.

    Returns the number of eval rows written; raises on a log without any.
    """
    evals = [r for r in log_rows if r.eval_mean is not None]
    if not evals:
        raise ValidationError("training log holds no evaluation rows", field="log")
    lines = ["iter,mean,std"]
    for r in evals:
        lines.append(f"{r.iteration},{r.eval_mean!r},{r.eval_std!r}")
    Path(csv_path).write_text("\n".join(lines) + "\n")

    xs = [r.iteration for r in evals]
    means = np.array([r.eval_mean for r in evals])
    stds = np.array([r.eval_std for r in evals])
    lo = float((means - stds).min())
    hi = float((means + stds).max())
    margin = max(1e-6, (hi - lo) * 0.1)
    canvas = SvgCanvas(640, 400)
    panel = _Panel(
        canvas,
        70,
        40,
        530,
        300,
        (min(xs), max(xs)),
        (lo - margin, hi + margin),
        title="evaluation return vs training iteration",
    )
    if len(evals) == 1:
        x = panel.px(xs[0])
        canvas.line(x, panel.py(means[0] - stds[0]), x, panel.py(means[0] + stds[0]), "#7aa6d6", 4)
        canvas.circle(x, panel.py(means[0]), 4, "#1f5fae")
    else:
        band = [(panel.px(x), panel.py(m + s)) for x, m, s in zip(xs, means, stds)]
        band += [(panel.px(x), panel.py(m - s)) for x, m, s in zip(reversed(xs), means[::-1], stds[::-1])]
        canvas.polygon(band, "#7aa6d6")
        canvas.polyline([(panel.px(x), panel.py(m)) for x, m in zip(xs, means)], "#1f5fae")
    panel.axis_labels("iteration", "mean return")
    panel.x_ticks(sorted({xs[0], xs[len(xs) // 2], xs[-1]}))
    panel.y_ticks(_y_tick_values(lo - margin, hi + margin))
    Path(svg_path).write_text(canvas.render())
    return len(evals)


# --- GDP replay report --------------------------------------------------------


def emit_gdp_report(
    scenario: Scenario,
    policy,
    out_dir,
    *,
    env_config: EnvConfig | None = None,
) -> dict:
    """Roll one episode and emit the three-panel program report.

    Panel 1: scheduled arrival demand split controlled/exempt/unaffected with
    the initial program rate; panel 2: post-RBS planned arrivals at release
    with the planned ground-delay total; panel 3: realized throughput against
    actual capacity and the last updated program rate.  Returns the totals
    dict (also written to report.csv).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    env = SagdpEnv(scenario, env_config)
    obs = env.reset()
    release = scenario.gdp.release_t
    planned_initial = env.planned_arrivals()
    initial_paar = env.paar_in_force()
    planned_gd_quarters = 0
    done = False
    while not done:
        t = env.t
        result = env.step(select_action(policy, obs))
        if t == release:
            planned_initial = env.planned_arrivals()
            initial_paar = env.paar_in_force()
            planned_gd_quarters = env.trace[-1]["gd_plan_quarters"]
        obs = result.obs
        done = result.done
    trace = env.trace
    final_paar = env.paar_in_force()

    qs = np.arange(HORIZON)
    demand = {
        ControlClass.CONTROLLED: np.zeros(HORIZON, dtype=np.int64),
        ControlClass.EXEMPT: np.zeros(HORIZON, dtype=np.int64),
        ControlClass.UNAFFECTED: np.zeros(HORIZON, dtype=np.int64),
    }
    by_id = {fc.flight_id: fc.control for fc in env.partition.classes}
    for f in scenario.flights:
        if f.flight_id in by_id and 0 <= f.sched_arr < HORIZON:
            demand[by_id[f.flight_id]][f.sched_arr] += 1
    arr_rate = np.array([q.arr_rate for q in scenario.quarters], dtype=np.int64)
    act_arr = np.array([r["act_arr"] for r in trace], dtype=np.int64)
    gd_now = np.array([r["gd_now"] for r in trace], dtype=np.int64)
    nh = np.array([r["nh"] for r in trace], dtype=np.int64)

    totals = {
        "planned_ground_delay_hours": planned_gd_quarters * QUARTER_HOURS,
        "realized_ground_delay_hours": int(gd_now.sum()) * QUARTER_HOURS,
        "realized_airborne_delay_hours": int(nh.sum()) * QUARTER_HOURS,
        "total_landings": int(act_arr.sum()),
        "episode_return": float(sum(r["reward"] for r in trace)),
    }

    rows = ["metric,value"]
    for key in sorted(totals):
        rows.append(f"{key},{totals[key]!r}")
    (out_dir / "report.csv").write_text("\n".join(rows) + "\n")

    header = (
        "t,demand_controlled,demand_exempt,demand_unaffected,initial_paar,"
        "planned_arrivals,arr_rate,act_arr,final_paar,gd_now,nh"
    )
    lines = [header]
    for t in range(HORIZON):
        lines.append(
            ",".join(
                str(v)
                for v in (
                    t,
                    demand[ControlClass.CONTROLLED][t],
                    demand[ControlClass.EXEMPT][t],
                    demand[ControlClass.UNAFFECTED][t],
                    initial_paar[t],
                    planned_initial[t],
                    arr_rate[t],
                    act_arr[t],
                    final_paar[t],
                    gd_now[t],
                    nh[t],
                )
            )
        )
    (out_dir / "report_quarters.csv").write_text("\n".join(lines) + "\n")
    write_trace_jsonl(trace, out_dir / "trace.jsonl")

    # Three stacked panels.
    canvas = SvgCanvas(940, 880)
    top = max(
        1,
        int(
            max(
                (demand[ControlClass.CONTROLLED] + demand[ControlClass.EXEMPT]
                 + demand[ControlClass.UNAFFECTED]).max(),
                planned_initial.max(),
                arr_rate.max(),
                act_arr.max(),
                initial_paar.max(),
                final_paar.max(),
            )
        ),
    )
    y_range = (0.0, top * 1.15)
    x_range = (-0.5, HORIZON - 0.5)

    p1 = _Panel(canvas, 60, 50, 840, 200, x_range, y_range,
                title="scheduled arrival demand (controlled orange, exempt blue, other gray) and initial program rate")
    stack0 = demand[ControlClass.EXEMPT]
    p1.bars(qs, stack0, "#5b8dd9")
    p1.bars(qs, demand[ControlClass.CONTROLLED], "#e69138", base=stack0)
    p1.bars(qs, demand[ControlClass.UNAFFECTED], "#bbbbbb",
            base=stack0 + demand[ControlClass.CONTROLLED])
    p1.steps(qs, initial_paar, "#cc0000")
    p1.y_ticks(_y_tick_values(0, y_range[1]))

    p2 = _Panel(canvas, 60, 330, 840, 200, x_range, y_range,
                title=f"post-RBS planned arrivals at release "
                      f"(planned ground delay {totals['planned_ground_delay_hours']:g} h)")
    p2.bars(qs, planned_initial, "#6aa84f")
    p2.steps(qs, initial_paar, "#cc0000")
    p2.y_ticks(_y_tick_values(0, y_range[1]))

    p3 = _Panel(canvas, 60, 610, 840, 200, x_range, y_range,
                title=f"realized throughput vs capacity "
                      f"(ground {totals['realized_ground_delay_hours']:g} h, "
                      f"airborne {totals['realized_airborne_delay_hours']:g} h)")
    p3.bars(qs, act_arr, "#6aa84f")
    p3.steps(qs, arr_rate, "#1f5fae")
    p3.steps(qs, final_paar, "#cc0000")
    p3.y_ticks(_y_tick_values(0, y_range[1]))
    p3.axis_labels("quarter hour", "flights")
    p3.x_ticks([0, 20, 40, 60, 79])

    (out_dir / "report.svg").write_text(canvas.render())
    return totals
