"""Traffic-pattern domain model for a non-towered airfield and the rule engine
that assigns ground-truth safety labels to scenarios.

Coordinates are handled two ways: true lat/lon for ADS-B snapshots, and a flat
local east/north frame (NM, origin at the approach-end threshold) for all rule
geometry.  Pattern legs are placed canonically from (phase, distance-to-threshold,
pattern side), which makes every event reconstructible as a point in the local
frame; positions between events are linearly interpolated.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum

from .metar import FlightCategory, Metar, flight_category

EARTH_RADIUS_NM = 3440.065
NM_PER_DEG = EARTH_RADIUS_NM * math.pi / 180.0

N_NUMBER_RE = re.compile(r"^N[0-9A-Z]{1,5}$")


class InvalidScenarioError(ValueError):
    """Raised when a scenario cannot be labeled (e.g. no events)."""


def great_circle_nm(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Haversine distance in nautical miles (mean Earth radius 3440.065 NM)."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    h = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_NM * math.asin(min(1.0, math.sqrt(h)))


class PatternPhase(str, Enum):
    CROSSWIND = "crosswind"
    DOWNWIND = "downwind"
    BASE = "base"
    FINAL = "final"
    SHORT_FINAL = "short_final"
    STRAIGHT_IN_FINAL = "straight_in_final"
    GO_AROUND = "go_around"
    ON_RUNWAY = "on_runway"
    CLEAR_OF_RUNWAY = "clear_of_runway"
    DEPARTURE = "departure"


# Phases that count as an active approach to the runway.
FINAL_PHASES = frozenset(
    {PatternPhase.FINAL, PatternPhase.SHORT_FINAL, PatternPhase.STRAIGHT_IN_FINAL}
)
# VFR circuit legs; flying these in instrument conditions is the weather-mismatch case.
CIRCUIT_LEGS = frozenset(
    {PatternPhase.CROSSWIND, PatternPhase.DOWNWIND, PatternPhase.BASE}
)
# Legs a radio-equipped pilot is expected to announce.
ANNOUNCED_PHASES = frozenset(
    {
        PatternPhase.CROSSWIND,
        PatternPhase.DOWNWIND,
        PatternPhase.BASE,
        PatternPhase.FINAL,
        PatternPhase.SHORT_FINAL,
        PatternPhase.STRAIGHT_IN_FINAL,
        PatternPhase.GO_AROUND,
        PatternPhase.CLEAR_OF_RUNWAY,
    }
)

# A "short final" call is only sensible close in.
SHORT_FINAL_MAX_NM = 1.0


class SafetyLabel3(str, Enum):
    NOMINAL = "nominal"
    WARNING = "warning"
    HAZARD = "hazard"


class SafetyLabelBinary(str, Enum):
    NOMINAL = "nominal"
    DANGER = "danger"


_SEVERITY = {SafetyLabel3.NOMINAL: 0, SafetyLabel3.WARNING: 1, SafetyLabel3.HAZARD: 2}


def collapse_to_binary(label: SafetyLabel3) -> SafetyLabelBinary:
    if label is SafetyLabel3.NOMINAL:
        return SafetyLabelBinary.NOMINAL
    return SafetyLabelBinary.DANGER


class HazardType(str, Enum):
    SIMULTANEOUS_FINAL = "simultaneous_final"
    SILENT_TRAFFIC = "silent_traffic"
    NOMINAL_SINGLE_AIRCRAFT = "nominal_single_aircraft"
    NOMINAL_INSTRUMENT_APPROACH = "nominal_instrument_approach"
    RUNWAY_INCURSION_RISK = "runway_incursion_risk"
    GO_AROUND_CONFLICT = "go_around_conflict"
    WRONG_RUNWAY_CALL = "wrong_runway_call"
    VFR_INTO_IMC = "vfr_into_imc"
    MISSING_POSITION_CALLS = "missing_position_calls"
    WRONG_PATTERN_DIRECTION = "wrong_pattern_direction"
    CONVERGING_FINAL_SEPARATED = "converging_final_separated"
    MIDAIR_CONVERGING_ALTITUDE = "midair_converging_altitude"


HAZARD_TYPE_LABELS: dict[HazardType, SafetyLabel3] = {
    HazardType.NOMINAL_SINGLE_AIRCRAFT: SafetyLabel3.NOMINAL,
    HazardType.NOMINAL_INSTRUMENT_APPROACH: SafetyLabel3.NOMINAL,
    HazardType.SILENT_TRAFFIC: SafetyLabel3.WARNING,
    HazardType.MISSING_POSITION_CALLS: SafetyLabel3.WARNING,
    HazardType.WRONG_PATTERN_DIRECTION: SafetyLabel3.WARNING,
    HazardType.CONVERGING_FINAL_SEPARATED: SafetyLabel3.WARNING,
    HazardType.SIMULTANEOUS_FINAL: SafetyLabel3.HAZARD,
    HazardType.RUNWAY_INCURSION_RISK: SafetyLabel3.HAZARD,
    HazardType.GO_AROUND_CONFLICT: SafetyLabel3.HAZARD,
    HazardType.WRONG_RUNWAY_CALL: SafetyLabel3.HAZARD,
    HazardType.VFR_INTO_IMC: SafetyLabel3.HAZARD,
    HazardType.MIDAIR_CONVERGING_ALTITUDE: SafetyLabel3.HAZARD,
}


@dataclass(frozen=True)
class Airfield:
    icao_id: str
    runway_heading_deg: float
    pattern_side: str  # "left" | "right"
    field_elev_ft: float
    lat: float
    lon: float
    runway_length_nm: float = 0.82

    def __post_init__(self):
        if not 0.0 <= self.runway_heading_deg < 360.0:
            raise ValueError(f"runway heading out of range: {self.runway_heading_deg}")
        if self.pattern_side not in ("left", "right"):
            raise ValueError(f"pattern side must be left or right: {self.pattern_side}")

    @property
    def runway_designator(self) -> str:
        return f"{round(self.runway_heading_deg / 10) % 36:02d}".lstrip("0") or "36"

    @property
    def reciprocal_designator(self) -> str:
        recip = (round(self.runway_heading_deg / 10) + 18) % 36
        return f"{recip:02d}".lstrip("0") or "36"


# Half Moon Bay: runway 30, right traffic, field elevation 66 ft.
KHAF = Airfield(
    icao_id="KHAF",
    runway_heading_deg=300.0,
    pattern_side="right",
    field_elev_ft=66.0,
    lat=37.5136,
    lon=-122.5011,
)


@dataclass(frozen=True)
class Aircraft:
    callsign: str
    type_name: str
    radio: str = "equipped"  # "equipped" | "NORDO"

    def __post_init__(self):
        if not N_NUMBER_RE.match(self.callsign):
            raise ValueError(f"invalid N-number callsign: {self.callsign!r}")
        if self.radio not in ("equipped", "NORDO"):
            raise ValueError(f"radio must be equipped or NORDO: {self.radio}")

    @property
    def is_nordo(self) -> bool:
        return self.radio == "NORDO"


@dataclass(frozen=True)
class AdsbState:
    t: float
    lat: float
    lon: float
    alt_msl_ft: float
    heading_deg: float
    speed_kt: float

    def __post_init__(self):
        if self.speed_kt < 0:
            raise ValueError("speed_kt must be nonnegative")
        if not 0.0 <= self.heading_deg < 360.0:
            raise ValueError("heading_deg must be in [0, 360)")


@dataclass(frozen=True)
class PositionEvent:
    t: float
    callsign: str
    phase: PatternPhase
    dist_nm: float
    alt_ft: float
    radio: str = "equipped"
    # Announcement annotations, carried with the event so the label rules are
    # decidable without the rendered transcript: whether the pilot actually
    # called this position, which side of the pattern the call claimed, and
    # which runway the call named (None = the active runway).
    announced: bool = True
    side: str | None = None
    announced_runway: str | None = None

    def __post_init__(self):
        if self.dist_nm < 0:
            raise ValueError("dist_nm must be nonnegative")
        if self.phase is PatternPhase.SHORT_FINAL and self.dist_nm > SHORT_FINAL_MAX_NM:
            raise ValueError(f"short final beyond {SHORT_FINAL_MAX_NM} NM: {self.dist_nm}")
        if self.side not in (None, "left", "right"):
            raise ValueError(f"side must be left/right/None: {self.side}")


@dataclass(frozen=True)
class Advisory:
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("advisory text must be non-empty")


@dataclass(frozen=True)
class Scenario:
    id: str
    hazard_type: HazardType
    label3: SafetyLabel3
    label_binary: SafetyLabelBinary
    metar_raw: str
    metar_decoded: str
    aircraft: tuple[Aircraft, ...]
    events: tuple[PositionEvent, ...]
    adsb: tuple[AdsbState, ...]
    transcript_srt: str
    advisory_text: str
    split: str = "test"  # "icl" | "test"
    duration_s: float = 0.0
    airfield: Airfield = field(default=KHAF)

    def __post_init__(self):
        if self.label_binary != collapse_to_binary(self.label3):
            raise ValueError("binary label inconsistent with 3-class label")
        if self.split not in ("icl", "test"):
            raise ValueError(f"split must be icl or test: {self.split}")


# ---------------------------------------------------------------------------
# Canonical pattern geometry
# ---------------------------------------------------------------------------

# Leg placement constants (NM): pattern width, final-intercept distance for the
# base leg, and the crosswind leg's along-track offset past the threshold.
PATTERN_WIDTH_NM = 1.0
BASE_INTERCEPT_NM = 0.8
CROSSWIND_OFFSET_NM = 1.1


def _bearing_unit(bearing_deg: float) -> tuple[float, float]:
    b = math.radians(bearing_deg)
    return (math.sin(b), math.cos(b))


def phase_position(
    airfield: Airfield,
    phase: PatternPhase,
    dist_nm: float,
    side: str | None = None,
    announced_runway: str | None = None,
) -> tuple[float, float]:
    """Local east/north position (NM from the threshold) of a pattern event.

    Final-family positions sit on the extended centerline; circuit legs are
    parallel/perpendicular segments offset to the pattern side, parameterized
    so that straight-line distance-to-threshold is invertible.  An approach
    announced for the reciprocal runway is placed beyond the departure end,
    head-on to normal traffic.
    """
    u = _bearing_unit(airfield.runway_heading_deg)
    pattern = side or airfield.pattern_side
    right = _bearing_unit((airfield.runway_heading_deg + 90.0) % 360.0)
    r = right if pattern == "right" else (-right[0], -right[1])
    w = PATTERN_WIDTH_NM

    if phase in FINAL_PHASES or phase is PatternPhase.GO_AROUND:
        if announced_runway is not None and announced_runway == airfield.reciprocal_designator:
            s = airfield.runway_length_nm + dist_nm
            return (s * u[0], s * u[1])
        return (-dist_nm * u[0], -dist_nm * u[1])
    if phase is PatternPhase.ON_RUNWAY:
        d = min(dist_nm, airfield.runway_length_nm)
        return (d * u[0], d * u[1])
    if phase is PatternPhase.DEPARTURE:
        return (dist_nm * u[0], dist_nm * u[1])
    if phase is PatternPhase.CLEAR_OF_RUNWAY:
        d = min(dist_nm, airfield.runway_length_nm)
        return (d * u[0] - 0.05 * r[0], d * u[1] - 0.05 * r[1])
    if phase is PatternPhase.DOWNWIND:
        # Leg runs parallel to the runway at the pattern width, from abeam the
        # threshold toward the base turn.
        s = -math.sqrt(max(dist_nm**2 - w**2, 0.0))
        return (s * u[0] + w * r[0], s * u[1] + w * r[1])
    if phase is PatternPhase.BASE:
        q = math.sqrt(max(dist_nm**2 - BASE_INTERCEPT_NM**2, 0.0))
        return (-BASE_INTERCEPT_NM * u[0] + q * r[0], -BASE_INTERCEPT_NM * u[1] + q * r[1])
    if phase is PatternPhase.CROSSWIND:
        q = math.sqrt(max(dist_nm**2 - CROSSWIND_OFFSET_NM**2, 0.0))
        return (CROSSWIND_OFFSET_NM * u[0] + q * r[0], CROSSWIND_OFFSET_NM * u[1] + q * r[1])
    raise ValueError(f"unhandled phase: {phase}")


def phase_heading(
    airfield: Airfield, phase: PatternPhase, side: str | None = None,
    announced_runway: str | None = None,
) -> float:
    """Canonical track (degrees) flown on each leg."""
    h = airfield.runway_heading_deg
    pattern = side or airfield.pattern_side
    turn = 90.0 if pattern == "right" else -90.0
    if phase in FINAL_PHASES or phase in (
        PatternPhase.GO_AROUND, PatternPhase.ON_RUNWAY, PatternPhase.DEPARTURE,
        PatternPhase.CLEAR_OF_RUNWAY,
    ):
        if announced_runway is not None and announced_runway == airfield.reciprocal_designator:
            return (h + 180.0) % 360.0
        return h
    if phase is PatternPhase.CROSSWIND:
        return (h + turn) % 360.0
    if phase is PatternPhase.DOWNWIND:
        return (h + 180.0) % 360.0
    if phase is PatternPhase.BASE:
        return (h + 180.0 + turn) % 360.0
    raise ValueError(f"unhandled phase: {phase}")


def local_to_latlon(airfield: Airfield, x_nm: float, y_nm: float) -> tuple[float, float]:
    lat = airfield.lat + y_nm / NM_PER_DEG
    lon = airfield.lon + x_nm / (NM_PER_DEG * math.cos(math.radians(airfield.lat)))
    return (lat, lon)


# ---------------------------------------------------------------------------
# Interpolated tracks
# ---------------------------------------------------------------------------


class Track:
    """One aircraft's piecewise-linear trajectory through its position events.

    The phase is a step function holding from each event until the next (and to
    the scenario end after the last event); position and altitude interpolate
    linearly between events and hold at the last point.
    """

    def __init__(self, airfield: Airfield, events: list[PositionEvent], end_t: float):
        self.events = sorted(events, key=lambda e: e.t)
        self.t0 = self.events[0].t
        self.t1 = self.events[-1].t
        self.end_t = max(end_t, self.t1)
        self.points = [
            phase_position(airfield, e.phase, e.dist_nm, e.side, e.announced_runway)
            for e in self.events
        ]

    def active(self, t: float) -> bool:
        return self.t0 <= t <= self.end_t

    def _segment(self, t: float) -> int:
        # Index i such that events[i].t <= t < events[i+1].t (clamped).
        lo, hi = 0, len(self.events) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.events[mid].t <= t:
                lo = mid
            else:
                hi = mid - 1
        return lo

    def phase(self, t: float) -> PatternPhase:
        return self.events[self._segment(t)].phase

    def position(self, t: float) -> tuple[float, float]:
        i = self._segment(t)
        if i >= len(self.events) - 1:
            return self.points[-1]
        e0, e1 = self.events[i], self.events[i + 1]
        if e1.t == e0.t:
            return self.points[i + 1]
        f = (t - e0.t) / (e1.t - e0.t)
        p0, p1 = self.points[i], self.points[i + 1]
        return (p0[0] + f * (p1[0] - p0[0]), p0[1] + f * (p1[1] - p0[1]))

    def altitude(self, t: float) -> float:
        i = self._segment(t)
        if i >= len(self.events) - 1:
            return self.events[-1].alt_ft
        e0, e1 = self.events[i], self.events[i + 1]
        if e1.t == e0.t:
            return e1.alt_ft
        f = (t - e0.t) / (e1.t - e0.t)
        return e0.alt_ft + f * (e1.alt_ft - e0.alt_ft)

    def velocity(self, t: float) -> tuple[float, float]:
        """Segment velocity in NM/s; at the last event the preceding segment's
        velocity is used (the aircraft is assumed to continue its motion)."""
        if len(self.events) < 2:
            return (0.0, 0.0)
        i = self._segment(t)
        if i >= len(self.events) - 1:
            if t > self.t1:
                return (0.0, 0.0)
            i = len(self.events) - 2
        e0, e1 = self.events[i], self.events[i + 1]
        dt = e1.t - e0.t
        if dt <= 0:
            return (0.0, 0.0)
        p0, p1 = self.points[i], self.points[i + 1]
        return ((p1[0] - p0[0]) / dt, (p1[1] - p0[1]) / dt)

    def phase_intervals(
        self, phases: frozenset[PatternPhase]
    ) -> list[tuple[float, float, bool]]:
        """Maximal intervals during which the phase is in `phases`.

        Each entry is (start, end, end_inclusive): a phase holds from its event
        until the next event (half-open), and the last event's phase persists
        through the scenario end (closed).
        """
        out: list[tuple[float, float, bool]] = []
        n = len(self.events)
        for i, e in enumerate(self.events):
            if e.phase not in phases:
                continue
            if i + 1 < n:
                start, end, inc = e.t, self.events[i + 1].t, False
            else:
                start, end, inc = e.t, self.end_t, True
            if start == end and not inc:
                continue  # zero-length interval displaced by a same-time event
            if out and out[-1][1] >= start:
                out[-1] = (out[-1][0], max(out[-1][1], end), inc or out[-1][2])
            else:
                out.append((start, end, inc))
        return out

    def segment_times(self, start: float, end: float) -> list[float]:
        times = [start] + [e.t for e in self.events if start < e.t < end] + [end]
        return times


# ---------------------------------------------------------------------------
# Rule engine
# ---------------------------------------------------------------------------

SIMULTANEOUS_FINAL_NM = 0.5
SAME_ALTITUDE_FT = 200.0
CONVERGENCE_HORIZON_S = 60.0
PARALLEL_TRACK_EPS = 1e-9
# Clamped leg geometry can put a track intersection exactly on a window edge
# (e.g. meeting time exactly 0); tolerances keep the predicate stable there.
CONVERGENCE_TIME_EPS = 1e-6
CLOSING_RATE_EPS = 1e-12


def _interval_overlap(
    a: tuple[float, float, bool], b: tuple[float, float, bool]
) -> tuple[float, float] | None:
    """Intersection window of two phase intervals, honoring end inclusivity."""

    def contains(iv: tuple[float, float, bool], x: float) -> bool:
        return iv[0] <= x and (x < iv[1] or (x == iv[1] and iv[2]))

    lo, hi = max(a[0], b[0]), min(a[1], b[1])
    if lo > hi:
        return None
    if lo == hi and not (contains(a, lo) and contains(b, lo)):
        return None
    return (lo, hi)


def _min_separation(trk_a: Track, trk_b: Track, start: float, end: float) -> float:
    """Exact minimum horizontal separation over [start, end].

    Positions are piecewise-linear, so squared separation is piecewise
    quadratic; the minimum on each piece is at the parabola vertex or an
    endpoint and is evaluated in closed form.
    """
    cuts = sorted(set(trk_a.segment_times(start, end) + trk_b.segment_times(start, end)))
    best = math.inf
    for s, e in zip(cuts, cuts[1:]):
        pa, pb = trk_a.position(s), trk_b.position(s)
        dx, dy = pa[0] - pb[0], pa[1] - pb[1]
        # Velocities are constant across each cut piece; sample mid-piece.
        va = trk_a.velocity((s + e) / 2.0)
        vb = trk_b.velocity((s + e) / 2.0)
        ux, uy = va[0] - vb[0], va[1] - vb[1]
        a = ux * ux + uy * uy
        b = 2.0 * (dx * ux + dy * uy)
        c = dx * dx + dy * dy
        dur = e - s
        candidates = [0.0, dur]
        if a > 0:
            tv = -b / (2.0 * a)
            if 0.0 < tv < dur:
                candidates.append(tv)
        for tc in candidates:
            d2 = a * tc * tc + b * tc + c
            if d2 < best:
                best = d2
    if not math.isfinite(best):
        # Degenerate zero-length window: evaluate at the instant.
        pa, pb = trk_a.position(start), trk_b.position(start)
        best = (pa[0] - pb[0]) ** 2 + (pa[1] - pb[1]) ** 2
    return math.sqrt(max(best, 0.0))


def _converging(
    pa: tuple[float, float], va: tuple[float, float],
    pb: tuple[float, float], vb: tuple[float, float],
) -> bool:
    """Closing range, and straight-line tracks that intersect within the
    convergence horizon for both aircraft at current speeds."""
    dx, dy = pb[0] - pa[0], pb[1] - pa[1]
    closing = dx * (vb[0] - va[0]) + dy * (vb[1] - va[1]) < -CLOSING_RATE_EPS
    if not closing:
        return False
    det = -va[0] * vb[1] + va[1] * vb[0]
    if abs(det) < PARALLEL_TRACK_EPS:
        return False
    # Solve pa + va*s = pb + vb*q.
    s = (-dx * vb[1] + dy * vb[0]) / det
    q = (va[0] * dy - va[1] * dx) / det
    lo = -CONVERGENCE_TIME_EPS
    hi = CONVERGENCE_HORIZON_S + CONVERGENCE_TIME_EPS
    return lo <= s <= hi and lo <= q <= hi


def label_scenario(
    events: list[PositionEvent] | tuple[PositionEvent, ...],
    aircraft: list[Aircraft] | tuple[Aircraft, ...],
    metar: Metar,
    airfield: Airfield = KHAF,
) -> SafetyLabel3:
    """Apply the hazard/warning rule table to a scenario's position events.

    Hazard: simultaneous final inside 0.5 NM; runway occupied under short
    final; wrong-runway announcement during an active approach; co-altitude
    converging traffic; circuit traffic in instrument conditions.
    Warning: wrong-direction pattern, both-on-final outside 0.5 NM, NORDO
    traffic, or unannounced required legs, with no hazard rule firing.
    """
    events = list(events)
    if not events:
        raise InvalidScenarioError("scenario has no position events")
    if not aircraft:
        raise InvalidScenarioError("scenario has no aircraft")

    by_callsign: dict[str, list[PositionEvent]] = {}
    for e in events:
        by_callsign.setdefault(e.callsign, []).append(e)
    end_t = max(e.t for e in events)
    tracks = {cs: Track(airfield, evs, end_t) for cs, evs in by_callsign.items()}
    callsigns = sorted(tracks)
    radio_by_callsign = {a.callsign: a.radio for a in aircraft}

    hazard = False
    warning = False

    # Pairwise rules over the final-approach geometry.
    for i in range(len(callsigns)):
        for j in range(i + 1, len(callsigns)):
            ta, tb = tracks[callsigns[i]], tracks[callsigns[j]]
            for iv_a in ta.phase_intervals(FINAL_PHASES):
                for iv_b in tb.phase_intervals(FINAL_PHASES):
                    window = _interval_overlap(iv_a, iv_b)
                    if window is None:
                        continue
                    sep = _min_separation(ta, tb, *window)
                    if sep < SIMULTANEOUS_FINAL_NM:
                        hazard = True
                    else:
                        warning = True

            # Runway occupied while the other is on short final.
            for occ, app in ((ta, tb), (tb, ta)):
                for iv_o in occ.phase_intervals(frozenset({PatternPhase.ON_RUNWAY})):
                    for iv_s in app.phase_intervals(frozenset({PatternPhase.SHORT_FINAL})):
                        if _interval_overlap(iv_o, iv_s) is not None:
                            hazard = True

    # Co-altitude convergence, checked at the instants witnessed by events.
    instants = sorted({e.t for e in events})
    for tau in instants:
        active = [cs for cs in callsigns if tracks[cs].active(tau)]
        for i in range(len(active)):
            for j in range(i + 1, len(active)):
                ta, tb = tracks[active[i]], tracks[active[j]]
                if abs(ta.altitude(tau) - tb.altitude(tau)) > SAME_ALTITUDE_FT:
                    continue
                if _converging(ta.position(tau), ta.velocity(tau),
                               tb.position(tau), tb.velocity(tau)):
                    hazard = True

    # Announcement-driven rules.
    active_runway = airfield.runway_designator
    for e in events:
        if e.announced_runway is not None and e.announced_runway != active_runway:
            # Wrong-runway call during an active approach by anyone.
            for trk in tracks.values():
                if trk.active(e.t) and trk.phase(e.t) in FINAL_PHASES:
                    hazard = True
                    break
        if e.side is not None and e.side != airfield.pattern_side and e.phase in CIRCUIT_LEGS:
            warning = True
        if (
            not e.announced
            and radio_by_callsign.get(e.callsign, "equipped") == "equipped"
            and e.phase in ANNOUNCED_PHASES
        ):
            warning = True

    # Circuit traffic in instrument conditions (weather mismatch).
    category = flight_category(metar)
    if category in (FlightCategory.IFR, FlightCategory.LIFR):
        if any(e.phase in CIRCUIT_LEGS for e in events):
            hazard = True

    # Any NORDO aircraft on frequency is at least a warning.
    if any(a.is_nordo for a in aircraft):
        warning = True

    if hazard:
        return SafetyLabel3.HAZARD
    if warning:
        return SafetyLabel3.WARNING
    return SafetyLabel3.NOMINAL
