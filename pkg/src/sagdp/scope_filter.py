"""Classify flights against a GDP: controlled, exempt, or unaffected.

A flight is controlled when all three hold:

a. its scheduled arrival falls inside the program window (inclusive ends),
b. its origin matches the scope (distance ring or listed centers), and
c. it has not taken off by the decision quarter (a departure in the same
   quarter still counts as delayable).

Flights inside the window that fail (b) or (c) are exempt; flights outside
the window are unaffected.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .data_model import FlightRecord, GdpAdvisory, ScopeKind
from .errors import ValidationError


class ControlClass(Enum):
    CONTROLLED = "CONTROLLED"
    EXEMPT = "EXEMPT"
    UNAFFECTED = "UNAFFECTED"


class ControlReason(Enum):
    IN_SCOPE = "IN_SCOPE"
    OUT_OF_SCOPE = "OUT_OF_SCOPE"
    ALREADY_DEPARTED = "ALREADY_DEPARTED"
    OUT_OF_WINDOW = "OUT_OF_WINDOW"


@dataclass(frozen=True)
class FlightClass:
    flight_id: str
    control: ControlClass
    reason: ControlReason


@dataclass(frozen=True)
class Partition:
    """Exhaustive, disjoint split of a flight list with per-flight annotations."""

    controlled: tuple[FlightRecord, ...]
    exempt: tuple[FlightRecord, ...]
    unaffected: tuple[FlightRecord, ...]
    classes: tuple[FlightClass, ...]  # aligned with the input order


def _scope_match(flight: FlightRecord, gdp: GdpAdvisory) -> bool:
    if gdp.scope_kind is ScopeKind.DISTANCE:
        return flight.origin_distance_nm <= gdp.scope_distance_nm
    return flight.origin_center in gdp.scope_centers


def classify_flight(flight: FlightRecord, gdp: GdpAdvisory, now: int) -> FlightClass:
    """Classify one flight; raises if it is not bound for the GDP airport.

    When a flight fails both the scope and the departed checks, the scope
    failure is reported (checks run in a/b/c order).
    """
    if flight.dest != gdp.airport:
        raise ValidationError(
            f"flight {flight.flight_id} is bound for {flight.dest}, not GDP airport "
            f"{gdp.airport}",
            field="dest",
        )
    if not (gdp.start_t <= flight.sched_arr <= gdp.end_t):
        return FlightClass(flight.flight_id, ControlClass.UNAFFECTED, ControlReason.OUT_OF_WINDOW)
    if not _scope_match(flight, gdp):
        return FlightClass(flight.flight_id, ControlClass.EXEMPT, ControlReason.OUT_OF_SCOPE)
    if flight.actual_dep is not None and flight.actual_dep < now:
        return FlightClass(
            flight.flight_id, ControlClass.EXEMPT, ControlReason.ALREADY_DEPARTED
        )
    return FlightClass(flight.flight_id, ControlClass.CONTROLLED, ControlReason.IN_SCOPE)


def is_in_scope(flight: FlightRecord, gdp: GdpAdvisory, now: int) -> bool:
    """True iff the flight is restricted by the GDP at decision quarter ``now``."""
    return classify_flight(flight, gdp, now).control is ControlClass.CONTROLLED


def partition_flights(flights, gdp: GdpAdvisory, now: int) -> Partition:
    controlled, exempt, unaffected, classes = [], [], [], []
    for flight in flights:
        fc = classify_flight(flight, gdp, now)
        classes.append(fc)
        if fc.control is ControlClass.CONTROLLED:
            controlled.append(flight)
        elif fc.control is ControlClass.EXEMPT:
            exempt.append(flight)
        else:
            unaffected.append(flight)
    return Partition(tuple(controlled), tuple(exempt), tuple(unaffected), tuple(classes))
