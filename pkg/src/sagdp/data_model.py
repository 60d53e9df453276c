"""Domain types and CSV ingestion for the single-airport GDP simulator.

All times are integer quarter-hour indices relative to the episode start;
an episode spans exactly ``HORIZON`` (80) quarters.  The three record types
mirror the three tabular data sources the simulator consumes:

* per-flight schedules (``flights.csv``),
* per-quarter airport conditions (``airport_quarters.csv``),
* GDP advisories (``gdp_advisories.csv``).

Parsers are strict: a structural problem (wrong column count, unparseable
literal) raises :class:`~sagdp.errors.ParseError` with the 1-based line
number, and a well-formed row that breaks a domain invariant raises
:class:`~sagdp.errors.ValidationError` naming the field.
"""

from __future__ import annotations

import csv
import io
import json
from bisect import bisect_left
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import ParseError, ValidationError

HORIZON = 80  # quarter hours per episode

# Right-closed discretization intervals; the first bin is closed on both ends.
CEILING_BIN_EDGES = (5.0, 10.0, 30.0, 100.0)  # hundreds of feet
VISIBILITY_BIN_EDGES = (1.0, 3.0, 5.0, 10.0)  # statute miles


class WeatherKind(Enum):
    CEILING = "CEILING"
    VISIBILITY = "VISIBILITY"


class ScopeKind(Enum):
    DISTANCE = "DISTANCE"
    CENTERS = "CENTERS"


def discretize_weather(kind: WeatherKind, value: float) -> int:
    """Map a ceiling (hundreds of ft) or visibility (statute miles) value to its bin 1..4.

    Bins are right-closed, e.g. ceiling 5.0 is bin 1 and 5.1 is bin 2.
    """
    edges = CEILING_BIN_EDGES if kind is WeatherKind.CEILING else VISIBILITY_BIN_EDGES
    if not (0.0 <= value <= edges[-1]):
        raise ValidationError(
            f"{kind.value} value {value!r} outside [0, {edges[-1]}]", field="value"
        )
    return bisect_left(edges, value) + 1


@dataclass(frozen=True)
class FlightRecord:
    """One scheduled arrival; the unit that can receive ground delay."""

    flight_id: str
    origin: str
    dest: str
    sched_dep: int
    sched_arr: int
    actual_dep: Optional[int]
    enroute_quarters: int
    origin_center: str
    origin_distance_nm: float

    def __post_init__(self):
        if self.sched_arr <= self.sched_dep:
            raise ValidationError(
                f"flight {self.flight_id}: sched_arr ({self.sched_arr}) must exceed "
                f"sched_dep ({self.sched_dep})",
                field="sched_arr",
            )
        if self.enroute_quarters < 1:
            raise ValidationError(
                f"flight {self.flight_id}: enroute_quarters must be >= 1",
                field="enroute_quarters",
            )
        if self.actual_dep is not None and self.actual_dep < 0:
            raise ValidationError(
                f"flight {self.flight_id}: actual_dep must be >= 0 when present",
                field="actual_dep",
            )
        if self.origin_distance_nm < 0:
            raise ValidationError(
                f"flight {self.flight_id}: origin_distance_nm must be >= 0",
                field="origin_distance_nm",
            )


@dataclass(frozen=True)
class AirportQuarter:
    """Airport truth for one quarter hour: capacity, weather, demand."""

    t: int
    arr_rate: int
    ceiling_100ft: float
    wind_angle_deg: int
    wind_speed: float
    visibility_sm: float
    runway_count: int
    sched_arr_demand: int
    sched_dep_demand: int

    def __post_init__(self):
        if not (0 <= self.t < HORIZON):
            raise ValidationError(f"quarter index {self.t} outside 0..{HORIZON - 1}", field="t")
        if self.arr_rate < 0:
            raise ValidationError("arr_rate must be >= 0", field="arr_rate")
        if not (0 <= self.wind_angle_deg <= 359):
            raise ValidationError(
                f"wind_angle_deg {self.wind_angle_deg} outside [0, 359]",
                field="wind_angle_deg",
            )
        if self.wind_speed < 0:
            raise ValidationError("wind_speed must be >= 0", field="wind_speed")
        if not (0.0 <= self.ceiling_100ft <= 100.0):
            raise ValidationError(
                f"ceiling_100ft {self.ceiling_100ft} outside [0, 100]", field="ceiling_100ft"
            )
        if not (0.0 <= self.visibility_sm <= 10.0):
            raise ValidationError(
                f"visibility_sm {self.visibility_sm} outside [0, 10]", field="visibility_sm"
            )
        if self.runway_count < 1:
            raise ValidationError("runway_count must be >= 1", field="runway_count")
        if self.sched_arr_demand < 0:
            raise ValidationError("sched_arr_demand must be >= 0", field="sched_arr_demand")
        if self.sched_dep_demand < 0:
            raise ValidationError("sched_dep_demand must be >= 0", field="sched_dep_demand")

    @property
    def ceiling_bin(self) -> int:
        return discretize_weather(WeatherKind.CEILING, self.ceiling_100ft)

    @property
    def visibility_bin(self) -> int:
        return discretize_weather(WeatherKind.VISIBILITY, self.visibility_sm)


@dataclass(frozen=True)
class GdpAdvisory:
    """One ground delay program: window, release time and scope."""

    airport: str
    release_t: int
    start_t: int
    end_t: int
    scope_kind: ScopeKind
    scope_distance_nm: Optional[float] = None
    scope_centers: Optional[frozenset[str]] = None

    def __post_init__(self):
        if not (self.release_t <= self.start_t < self.end_t):
            raise ValidationError(
                f"advisory for {self.airport}: need release_t <= start_t < end_t, got "
                f"({self.release_t}, {self.start_t}, {self.end_t})",
                field="end_t" if self.start_t >= self.end_t else "start_t",
            )
        has_distance = self.scope_distance_nm is not None
        has_centers = self.scope_centers is not None
        if has_distance == has_centers:
            raise ValidationError(
                "exactly one of scope_distance_nm / scope_centers must be set",
                field="scope_kind",
            )
        if self.scope_kind is ScopeKind.DISTANCE and not has_distance:
            raise ValidationError(
                "scope_kind DISTANCE requires scope_distance_nm", field="scope_distance_nm"
            )
        if self.scope_kind is ScopeKind.CENTERS and not has_centers:
            raise ValidationError(
                "scope_kind CENTERS requires scope_centers", field="scope_centers"
            )


@dataclass(frozen=True)
class Scenario:
    """One episode's airport truth: 80 quarters, the flight list, one GDP."""

    airport: str
    quarters: tuple[AirportQuarter, ...]
    flights: tuple[FlightRecord, ...]
    gdp: GdpAdvisory
    seed: int


def build_scenario(
    quarters: Sequence[AirportQuarter],
    flights: Sequence[FlightRecord],
    advisory: GdpAdvisory,
    seed: int,
) -> Scenario:
    """Assemble and cross-validate a :class:`Scenario`.

    Raises :class:`ValidationError` unless there are exactly ``HORIZON``
    quarters with indices 0..79 and the advisory targets the same airport the
    quarters describe (taken from the advisory itself; quarter records are
    airport-implicit).
    """
    quarters = tuple(sorted(quarters, key=lambda q: q.t))
    if len(quarters) != HORIZON:
        raise ValidationError(
            f"expected {HORIZON} quarters, got {len(quarters)}", field="quarters"
        )
    for expect, q in enumerate(quarters):
        if q.t != expect:
            raise ValidationError(
                f"quarter indices must be exactly 0..{HORIZON - 1}; missing t={expect}",
                field="quarters",
            )
    for f in flights:
        if f.dest != advisory.airport:
            raise ValidationError(
                f"flight {f.flight_id} dest {f.dest} does not match advisory airport "
                f"{advisory.airport}",
                field="dest",
            )
    return Scenario(
        airport=advisory.airport,
        quarters=quarters,
        flights=tuple(flights),
        gdp=advisory,
        seed=seed,
    )


# --- CSV schemas (column order is the canonical serialized form) ---

FLIGHT_COLUMNS = (
    "flight_id",
    "origin",
    "dest",
    "sched_dep",
    "sched_arr",
    "actual_dep",
    "enroute_quarters",
    "origin_center",
    "origin_distance_nm",
)

QUARTER_COLUMNS = (
    "t",
    "arr_rate",
    "ceiling_100ft",
    "wind_angle_deg",
    "wind_speed",
    "visibility_sm",
    "runway_count",
    "sched_arr_demand",
    "sched_dep_demand",
)

ADVISORY_COLUMNS = (
    "airport",
    "release_t",
    "start_t",
    "end_t",
    "scope_kind",
    "scope_distance_nm",
    "scope_centers",
)


def _decode(stream) -> io.TextIOBase:
    """Accept a Path (opened), bytes (decoded), str (CSV text) or file object."""
    if isinstance(stream, Path):
        return open(stream, "r", encoding="utf-8", newline="")
    if isinstance(stream, bytes):
        return io.StringIO(stream.decode("utf-8"))
    if isinstance(stream, str):
        return io.StringIO(stream)
    if hasattr(stream, "read"):
        data = stream.read()
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        return io.StringIO(data)
    raise TypeError(f"cannot read CSV from {type(stream)!r}")


def _rows(stream, columns):
    """Yield (line_number, row_dict) pairs after validating the header."""
    text = _decode(stream)
    try:
        reader = csv.reader(text)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty input, expected header", line=1) from None
        if tuple(header) != columns:
            raise ParseError(
                f"header {header!r} does not match expected columns {list(columns)!r}",
                line=1,
            )
        for line, row in enumerate(reader, start=2):
            if not row:
                continue  # tolerate trailing blank line
            if len(row) != len(columns):
                raise ParseError(
                    f"expected {len(columns)} fields, got {len(row)}", line=line
                )
            yield line, dict(zip(columns, row))
    finally:
        text.close()


def _parse_int(raw, field, line):
    try:
        return int(raw)
    except ValueError:
        raise ParseError(f"field {field!r}: {raw!r} is not an integer", line=line) from None


def _parse_float(raw, field, line):
    try:
        return float(raw)
    except ValueError:
        raise ParseError(f"field {field!r}: {raw!r} is not a number", line=line) from None


def _revalidate(make, line):
    """Run a record constructor, re-raising ValidationError with the line number."""
    try:
        return make()
    except ValidationError as exc:
        raise ValidationError(str(exc), field=exc.field, line=line) from None


def parse_flights(stream) -> list[FlightRecord]:
    """Parse ``flights.csv`` content (bytes, text, path or file object)."""
    out = []
    for line, row in _rows(stream, FLIGHT_COLUMNS):
        actual_dep = (
            None if row["actual_dep"] == "" else _parse_int(row["actual_dep"], "actual_dep", line)
        )
        out.append(
            _revalidate(
                lambda row=row, actual_dep=actual_dep, line=line: FlightRecord(
                    flight_id=row["flight_id"],
                    origin=row["origin"],
                    dest=row["dest"],
                    sched_dep=_parse_int(row["sched_dep"], "sched_dep", line),
                    sched_arr=_parse_int(row["sched_arr"], "sched_arr", line),
                    actual_dep=actual_dep,
                    enroute_quarters=_parse_int(
                        row["enroute_quarters"], "enroute_quarters", line
                    ),
                    origin_center=row["origin_center"],
                    origin_distance_nm=_parse_float(
                        row["origin_distance_nm"], "origin_distance_nm", line
                    ),
                ),
                line,
            )
        )
    return out


def parse_airport_quarters(stream) -> list[AirportQuarter]:
    """Parse ``airport_quarters.csv``; output is sorted by ``t`` with duplicates rejected."""
    out = []
    seen: dict[int, int] = {}
    for line, row in _rows(stream, QUARTER_COLUMNS):
        t = _parse_int(row["t"], "t", line)
        if t in seen:
            raise ValidationError(
                f"duplicate quarter index {t} (first seen on line {seen[t]})",
                field="t",
                line=line,
            )
        seen[t] = line
        out.append(
            _revalidate(
                lambda row=row, t=t, line=line: AirportQuarter(
                    t=t,
                    arr_rate=_parse_int(row["arr_rate"], "arr_rate", line),
                    ceiling_100ft=_parse_float(row["ceiling_100ft"], "ceiling_100ft", line),
                    wind_angle_deg=_parse_int(row["wind_angle_deg"], "wind_angle_deg", line),
                    wind_speed=_parse_float(row["wind_speed"], "wind_speed", line),
                    visibility_sm=_parse_float(row["visibility_sm"], "visibility_sm", line),
                    runway_count=_parse_int(row["runway_count"], "runway_count", line),
                    sched_arr_demand=_parse_int(
                        row["sched_arr_demand"], "sched_arr_demand", line
                    ),
                    sched_dep_demand=_parse_int(
                        row["sched_dep_demand"], "sched_dep_demand", line
                    ),
                ),
                line,
            )
        )
    out.sort(key=lambda q: q.t)
    return out


def parse_gdp_advisories(stream) -> list[GdpAdvisory]:
    """Parse ``gdp_advisories.csv``; centers are ';'-separated in one cell."""
    out = []
    for line, row in _rows(stream, ADVISORY_COLUMNS):
        kind_raw = row["scope_kind"]
        try:
            kind = ScopeKind(kind_raw)
        except ValueError:
            raise ValidationError(
                f"scope_kind {kind_raw!r} not one of DISTANCE, CENTERS",
                field="scope_kind",
                line=line,
            ) from None
        distance = (
            None
            if row["scope_distance_nm"] == ""
            else _parse_float(row["scope_distance_nm"], "scope_distance_nm", line)
        )
        centers = (
            None
            if row["scope_centers"] == ""
            else frozenset(c for c in row["scope_centers"].split(";") if c)
        )
        out.append(
            _revalidate(
                lambda row=row, kind=kind, distance=distance, centers=centers, line=line: GdpAdvisory(
                    airport=row["airport"],
                    release_t=_parse_int(row["release_t"], "release_t", line),
                    start_t=_parse_int(row["start_t"], "start_t", line),
                    end_t=_parse_int(row["end_t"], "end_t", line),
                    scope_kind=kind,
                    scope_distance_nm=distance,
                    scope_centers=centers,
                ),
                line,
            )
        )
    return out


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_flights(records: Iterable[FlightRecord]) -> str:
    lines = [",".join(FLIGHT_COLUMNS)]
    for f in records:
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    f.flight_id,
                    f.origin,
                    f.dest,
                    f.sched_dep,
                    f.sched_arr,
                    f.actual_dep,
                    f.enroute_quarters,
                    f.origin_center,
                    f.origin_distance_nm,
                )
            )
        )
    return "\n".join(lines) + "\n"


def serialize_airport_quarters(records: Iterable[AirportQuarter]) -> str:
    lines = [",".join(QUARTER_COLUMNS)]
    for q in sorted(records, key=lambda q: q.t):
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    q.t,
                    q.arr_rate,
                    q.ceiling_100ft,
                    q.wind_angle_deg,
                    q.wind_speed,
                    q.visibility_sm,
                    q.runway_count,
                    q.sched_arr_demand,
                    q.sched_dep_demand,
                )
            )
        )
    return "\n".join(lines) + "\n"


def serialize_gdp_advisories(records: Iterable[GdpAdvisory]) -> str:
    lines = [",".join(ADVISORY_COLUMNS)]
    for g in records:
        centers = "" if g.scope_centers is None else ";".join(sorted(g.scope_centers))
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    g.airport,
                    g.release_t,
                    g.start_t,
                    g.end_t,
                    g.scope_kind.value,
                    g.scope_distance_nm,
                    centers,
                )
            )
        )
    return "\n".join(lines) + "\n"


# --- Scenario directory layout: three CSVs plus a small meta file ---

SCENARIO_FILES = ("flights.csv", "airport_quarters.csv", "gdp_advisories.csv", "meta.json")


def save_scenario(scenario: Scenario, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "flights.csv").write_text(serialize_flights(scenario.flights))
    (directory / "airport_quarters.csv").write_text(
        serialize_airport_quarters(scenario.quarters)
    )
    (directory / "gdp_advisories.csv").write_text(serialize_gdp_advisories([scenario.gdp]))
    meta = {"airport": scenario.airport, "seed": scenario.seed}
    (directory / "meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def load_scenario(directory) -> Scenario:
    directory = Path(directory)
    flights = parse_flights(directory / "flights.csv")
    quarters = parse_airport_quarters(directory / "airport_quarters.csv")
    advisories = parse_gdp_advisories(directory / "gdp_advisories.csv")
    if len(advisories) != 1:
        raise ValidationError(
            f"scenario directory must hold exactly one advisory, found {len(advisories)}",
            field="gdp",
        )
    meta = json.loads((directory / "meta.json").read_text())
    return build_scenario(quarters, flights, advisories[0], seed=int(meta["seed"]))
