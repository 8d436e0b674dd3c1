"""Seeded construction of the 100-scenario KHAF traffic benchmark.

Each scenario is drawn from an independent RNG substream (derived from the
dataset seed and the scenario index), scripted to realize one hazard-type's
traffic pattern, checked against the rule engine, and rendered into a METAR,
an SRT transcript, and a ground-truth advisory.  The template transcript
backend is fully deterministic so the whole pipeline runs offline; an endpoint
backend can be plugged in to reproduce the original generation path.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable

from . import prompts
from .airspace import (
    KHAF,
    Advisory,
    Aircraft,
    AdsbState,
    Airfield,
    HazardType,
    HAZARD_TYPE_LABELS,
    PatternPhase,
    PositionEvent,
    SafetyLabel3,
    Scenario,
    Track,
    collapse_to_binary,
    label_scenario,
    local_to_latlon,
    phase_heading,
)
from .metar import (
    CloudLayer,
    FlightCategory,
    Metar,
    Wind,
    WxPhenomenon,
    decode_metar,
    emit_metar,
    flight_category,
    parse_metar,
)
from .transcript import (
    NATO_DIGITS,
    SrtCue,
    Transcript,
    emit_srt,
    nato_spell,
    parse_srt,
    validate_timing,
)


class GenerationError(RuntimeError):
    pass


AIRCRAFT_TYPES = (
    "Cessna 172",
    "Cessna 152",
    "Piper Cherokee",
    "Piper Seneca",
    "Cirrus SR22",
    "Beechcraft Bonanza",
    "Mooney M20",
    "Diamond DA40",
)

_CALLSIGN_LETTERS = "ABCDEFGHJKLMNPQRSTUVWXYZ"  # no I/O, per registration practice


@dataclass(frozen=True)
class GenConfig:
    seed: int = 20250301
    n_scenarios: int = 100
    class_targets: dict[str, int] = field(
        default_factory=lambda: {"nominal": 33, "warning": 34, "hazard": 33}
    )
    icl_per_class: int = 2
    airport: Airfield = KHAF
    transcript_backend: str = "template"  # "template" | "endpoint"

    def __post_init__(self):
        if sum(self.class_targets.values()) != self.n_scenarios:
            raise ValueError("class targets must sum to n_scenarios")
        for cls, n in self.class_targets.items():
            if n < self.icl_per_class:
                raise ValueError(f"class {cls} smaller than its ICL allocation")


@dataclass
class Dataset:
    scenarios: tuple[Scenario, ...]

    @property
    def icl_pool(self) -> tuple[Scenario, ...]:
        return tuple(s for s in self.scenarios if s.split == "icl")

    @property
    def test_split(self) -> tuple[Scenario, ...]:
        return tuple(s for s in self.scenarios if s.split == "test")

    def manifest_rows(self) -> list[dict[str, str]]:
        return [
            {
                "id": s.id,
                "hazard_type": s.hazard_type.value,
                "label3": s.label3.value,
                "label_binary": s.label_binary.value,
                "split": s.split,
            }
            for s in self.scenarios
        ]

    def manifest_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(
            buf, fieldnames=["id", "hazard_type", "label3", "label_binary", "split"],
            lineterminator="\n",
        )
        writer.writeheader()
        writer.writerows(self.manifest_rows())
        return buf.getvalue()


def substream(seed: int, index: int, tag: str = "") -> random.Random:
    """Independent per-scenario RNG, stable across platforms and runs."""
    digest = hashlib.sha256(f"{seed}:{index}:{tag}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


# ---------------------------------------------------------------------------
# METAR sampling
# ---------------------------------------------------------------------------

_IMC_TYPES = frozenset({HazardType.VFR_INTO_IMC})


def _sample_metar(rng: random.Random, hazard_type: HazardType, airfield: Airfield) -> Metar:
    """Draw a report from the weather family matching the hazard type:
    instrument conditions for the weather-mismatch category, VFR/MVFR (3:1)
    for everything else."""
    if hazard_type in _IMC_TYPES:
        family = "imc"
    else:
        family = "vfr" if rng.random() < 0.75 else "mvfr"

    day = rng.randint(1, 28)
    hour = rng.randint(0, 23)
    minute = rng.choice((15, 35, 55))
    obs = f"{day:02d}{hour:02d}{minute:02d}"
    auto = rng.random() < 0.8

    temp = rng.randint(12, 24)
    wind_dir = rng.choice((0, 140, 160, 180, 200, 220, 240, 280, 300, 320))
    wind_speed = 0 if wind_dir == 0 else rng.randint(3, 14)
    gust = None
    if wind_speed >= 10 and rng.random() < 0.3:
        gust = wind_speed + rng.randint(5, 9)
    wind = Wind(dir_deg=wind_dir if wind_speed else 0, speed_kt=wind_speed, gust_kt=gust)

    wx: list[WxPhenomenon] = []
    if family == "vfr":
        vis = Fraction(rng.choice((7, 8, 9, 10, 10)))
        layers = rng.choice((
            (CloudLayer("CLR", None),),
            (CloudLayer("FEW", rng.randrange(15, 60) * 100),),
            (CloudLayer("SCT", rng.randrange(20, 60) * 100),),
            (CloudLayer("FEW", 1500), CloudLayer("BKN", rng.randrange(35, 80) * 100)),
        ))
        dew = temp - rng.randint(2, 8)
    elif family == "mvfr":
        vis = Fraction(rng.choice((3, 4, 5, 5)))
        base = rng.randrange(10, 30) * 100
        layers = (CloudLayer("FEW", max(base - 1000, 500)), CloudLayer("BKN", base))
        wx.append(WxPhenomenon("-", rng.choice(("BR", "BR", "RA"))))
        dew = temp - rng.randint(1, 3)
    else:
        if rng.random() < 0.6:
            vis = Fraction(rng.choice((1, 2))) + rng.choice((Fraction(0), Fraction(1, 2)))
            vis = max(vis, Fraction(1))
            base = rng.randrange(5, 9) * 100
        else:
            vis = Fraction(rng.choice((Fraction(1, 2), Fraction(3, 4))))
            base = rng.randrange(2, 4) * 100
        layers = (CloudLayer("OVC", base),)
        wx.append(WxPhenomenon("", rng.choice(("BR", "FG"))))
        dew = temp - rng.randint(0, 1)

    metar = Metar(
        station=airfield.icao_id,
        day_hour_min_z=obs,
        auto=auto,
        wind=wind,
        visibility_sm=vis,
        visibility_less_than=False,
        wx_phenomena=tuple(wx),
        cloud_layers=layers,
        temp_c=temp,
        dewpoint_c=dew,
        altimeter_inhg=rng.randrange(2970, 3030) / 100.0,
        remarks="RMK AO2" if auto else "",
    )
    category = flight_category(metar)
    if family == "imc":
        assert category in (FlightCategory.IFR, FlightCategory.LIFR)
    else:
        assert category in (FlightCategory.VFR, FlightCategory.MVFR)
    return metar


# ---------------------------------------------------------------------------
# Per-hazard-type traffic scripts
# ---------------------------------------------------------------------------


def _new_callsign(rng: random.Random, taken: set[str]) -> str:
    while True:
        cs = "N" + str(rng.randint(1, 9)) + "".join(
            rng.choice("0123456789") for _ in range(2)
        ) + "".join(rng.choice(_CALLSIGN_LETTERS) for _ in range(2))
        if cs not in taken:
            taken.add(cs)
            return cs


def _alt_on_final(airfield: Airfield, dist_nm: float) -> float:
    return airfield.field_elev_ft + round(370.0 * dist_nm, -1)


def _pattern_alt(airfield: Airfield, rng: random.Random) -> float:
    return airfield.field_elev_ft + rng.choice((900.0, 1000.0, 1100.0))


def _ev(t, cs, phase, dist, alt, radio="equipped", announced=True, side=None, rwy=None):
    return PositionEvent(
        t=round(t, 1), callsign=cs, phase=phase, dist_nm=round(dist, 2),
        alt_ft=round(alt, 0), radio=radio, announced=announced, side=side,
        announced_runway=rwy,
    )


def _circuit_events(
    rng: random.Random, af: Airfield, cs: str, *,
    start_t: float = 0.0, side: str | None = None, announced_mask: dict | None = None,
    include_crosswind: bool = True, radio: str = "equipped",
) -> list[PositionEvent]:
    """A full circuit: (crosswind), downwind, base, final, short final, clear."""
    announced_mask = announced_mask or {}
    alt = _pattern_alt(af, rng)
    t = start_t
    out = []
    if include_crosswind:
        out.append(_ev(t, cs, PatternPhase.CROSSWIND, math.hypot(1.1, 0.4), alt - 300,
                       radio=radio, side=side,
                       announced=announced_mask.get(PatternPhase.CROSSWIND, True)))
        t += rng.uniform(9, 12)
    out.append(_ev(t, cs, PatternPhase.DOWNWIND, 1.0, alt, radio=radio, side=side,
                   announced=announced_mask.get(PatternPhase.DOWNWIND, True)))
    t += rng.uniform(9, 12)
    out.append(_ev(t, cs, PatternPhase.BASE, math.hypot(0.8, 0.7), alt - 200,
                   radio=radio, side=side,
                   announced=announced_mask.get(PatternPhase.BASE, True)))
    t += rng.uniform(9, 12)
    out.append(_ev(t, cs, PatternPhase.FINAL, 0.9, _alt_on_final(af, 0.9),
                   radio=radio, side=side,
                   announced=announced_mask.get(PatternPhase.FINAL, True)))
    t += rng.uniform(9, 12)
    out.append(_ev(t, cs, PatternPhase.SHORT_FINAL, 0.4, _alt_on_final(af, 0.4),
                   radio=radio, side=side,
                   announced=announced_mask.get(PatternPhase.SHORT_FINAL, True)))
    t += rng.uniform(10, 13)
    out.append(_ev(t, cs, PatternPhase.CLEAR_OF_RUNWAY, 0.1, af.field_elev_ft,
                   radio=radio, side=side,
                   announced=announced_mask.get(PatternPhase.CLEAR_OF_RUNWAY, True)))
    return out


def _straight_in_events(
    rng: random.Random, af: Airfield, cs: str, *,
    start_t: float = 0.0, start_dist: float = 3.0, speed_kt: float | None = None,
    land: bool = True, radio: str = "equipped",
) -> list[PositionEvent]:
    speed = speed_kt if speed_kt is not None else rng.uniform(75, 95)
    nm_per_s = speed / 3600.0
    t, d = start_t, start_dist
    out = [_ev(t, cs, PatternPhase.STRAIGHT_IN_FINAL, d, _alt_on_final(af, d), radio=radio)]
    while d > 1.1:
        dt = rng.uniform(9, 12)
        t += dt
        d -= nm_per_s * dt
        out.append(_ev(t, cs, PatternPhase.STRAIGHT_IN_FINAL, d, _alt_on_final(af, d),
                       radio=radio))
    dt = rng.uniform(9, 12)
    t += dt
    d = max(d - nm_per_s * dt, 0.35)
    out.append(_ev(t, cs, PatternPhase.SHORT_FINAL, d, _alt_on_final(af, d), radio=radio))
    if land:
        t += rng.uniform(10, 13)
        out.append(_ev(t, cs, PatternPhase.CLEAR_OF_RUNWAY, 0.1, af.field_elev_ft,
                       radio=radio))
    return out


def _build_traffic(
    rng: random.Random, hazard_type: HazardType, af: Airfield
) -> tuple[list[Aircraft], list[PositionEvent]]:
    taken: set[str] = set()
    mk = lambda radio="equipped": Aircraft(
        callsign=_new_callsign(rng, taken),
        type_name=rng.choice(AIRCRAFT_TYPES),
        radio=radio,
    )

    if hazard_type is HazardType.NOMINAL_SINGLE_AIRCRAFT:
        a = mk()
        return [a], _circuit_events(rng, af, a.callsign)

    if hazard_type is HazardType.NOMINAL_INSTRUMENT_APPROACH:
        a = mk()
        return [a], _straight_in_events(rng, af, a.callsign, start_dist=rng.uniform(2.8, 3.4))

    if hazard_type is HazardType.MISSING_POSITION_CALLS:
        a = mk()
        skipped = rng.sample([PatternPhase.DOWNWIND, PatternPhase.BASE,
                              PatternPhase.CROSSWIND], k=rng.choice((1, 2)))
        mask = {ph: False for ph in skipped}
        return [a], _circuit_events(rng, af, a.callsign, announced_mask=mask)

    if hazard_type is HazardType.WRONG_PATTERN_DIRECTION:
        a = mk()
        wrong = "left" if af.pattern_side == "right" else "right"
        return [a], _circuit_events(rng, af, a.callsign, side=wrong,
                                    include_crosswind=rng.random() < 0.5)

    if hazard_type is HazardType.SILENT_TRAFFIC:
        a, ghost = mk(), mk("NORDO")
        events = _straight_in_events(rng, af, a.callsign, start_dist=rng.uniform(2.6, 3.2))
        alt = _pattern_alt(af, rng)
        t0 = rng.uniform(0, 4)
        for i, d in enumerate((1.0, 1.1, 1.25)):
            events.append(_ev(t0 + i * rng.uniform(10, 14), ghost.callsign,
                              PatternPhase.DOWNWIND, d, alt, radio="NORDO",
                              announced=False))
        return [a, ghost], events

    if hazard_type is HazardType.CONVERGING_FINAL_SEPARATED:
        a, b = mk(), mk()
        va = rng.uniform(82, 95)
        vb = rng.uniform(68, va - 8)
        gap = rng.uniform(0.8, 1.4)
        events = _straight_in_events(rng, af, a.callsign,
                                     start_dist=rng.uniform(2.2, 2.6), speed_kt=va)
        events += _straight_in_events(rng, af, b.callsign, start_t=rng.uniform(3, 6),
                                      start_dist=rng.uniform(2.2, 2.6) + gap,
                                      speed_kt=vb, land=False)
        return [a, b], events

    if hazard_type is HazardType.SIMULTANEOUS_FINAL:
        a, b = mk(), mk()
        # Straight-in traffic overtaking pattern traffic on the same final.
        events = []
        t, d = rng.uniform(3, 6), 2.0
        for step in range(3):
            events.append(_ev(t, a.callsign, PatternPhase.STRAIGHT_IN_FINAL, d,
                              _alt_on_final(af, d)))
            t += rng.uniform(9, 11)
            d -= rng.uniform(0.45, 0.55)
        events.append(_ev(t, a.callsign, PatternPhase.SHORT_FINAL, max(d, 0.35),
                          _alt_on_final(af, max(d, 0.35))))
        t_go = t + rng.uniform(9, 11)
        events.append(_ev(t_go, a.callsign, PatternPhase.GO_AROUND, 0.2,
                          _alt_on_final(af, 0.5)))

        tb = 0.0
        events.append(_ev(tb, b.callsign, PatternPhase.BASE, math.hypot(0.8, 0.5),
                          _alt_on_final(af, 1.0) + 100))
        tb += rng.uniform(9, 11)
        for db in (0.8, 0.5, 0.25):
            phase = PatternPhase.FINAL if db > 0.6 else PatternPhase.SHORT_FINAL
            events.append(_ev(tb, b.callsign, phase, db, _alt_on_final(af, db)))
            tb += rng.uniform(10, 13)
        return [a, b], events

    if hazard_type is HazardType.RUNWAY_INCURSION_RISK:
        a, b = mk(), mk()
        events = []
        t, d = 0.0, rng.uniform(1.2, 1.5)
        events.append(_ev(t, a.callsign, PatternPhase.FINAL, d, _alt_on_final(af, d)))
        t += rng.uniform(9, 12)
        events.append(_ev(t, a.callsign, PatternPhase.SHORT_FINAL, 0.8,
                          _alt_on_final(af, 0.8)))
        t += rng.uniform(9, 12)
        events.append(_ev(t, a.callsign, PatternPhase.SHORT_FINAL, 0.4,
                          _alt_on_final(af, 0.4)))
        t_inc = rng.uniform(8, 12)
        events.append(_ev(t_inc, b.callsign, PatternPhase.ON_RUNWAY, 0.05,
                          af.field_elev_ft))
        events.append(_ev(t + rng.uniform(8, 11), b.callsign,
                          PatternPhase.CLEAR_OF_RUNWAY, 0.1, af.field_elev_ft))
        return [a, b], events

    if hazard_type is HazardType.GO_AROUND_CONFLICT:
        a, b = mk(), mk()
        events = [
            _ev(0.0, b.callsign, PatternPhase.ON_RUNWAY, 0.1, af.field_elev_ft),
            _ev(rng.uniform(19, 23), b.callsign, PatternPhase.DEPARTURE, 0.5,
                af.field_elev_ft + 200),
            _ev(rng.uniform(33, 38), b.callsign, PatternPhase.DEPARTURE, 1.2,
                af.field_elev_ft + 600),
        ]
        t = rng.uniform(4, 7)
        events.append(_ev(t, a.callsign, PatternPhase.SHORT_FINAL, 0.9,
                          _alt_on_final(af, 0.9)))
        t += rng.uniform(9, 12)
        events.append(_ev(t, a.callsign, PatternPhase.SHORT_FINAL, 0.45,
                          _alt_on_final(af, 0.45)))
        t += rng.uniform(9, 12)
        events.append(_ev(t, a.callsign, PatternPhase.GO_AROUND, 0.2,
                          _alt_on_final(af, 0.4)))
        return [a, b], events

    if hazard_type is HazardType.WRONG_RUNWAY_CALL:
        a, b = mk(), mk()
        wrong = af.reciprocal_designator
        events = []
        t, d = 0.0, rng.uniform(1.4, 1.7)
        for phase, dd in ((PatternPhase.FINAL, d), (PatternPhase.SHORT_FINAL, 0.7),
                          (PatternPhase.SHORT_FINAL, 0.3)):
            events.append(_ev(t, a.callsign, phase, dd, _alt_on_final(af, dd)))
            t += rng.uniform(10, 13)
        tb, db = rng.uniform(4, 7), rng.uniform(2.2, 2.6)
        for _ in range(3):
            events.append(_ev(tb, b.callsign, PatternPhase.FINAL, db,
                              _alt_on_final(af, db), rwy=wrong))
            tb += rng.uniform(10, 13)
            db -= rng.uniform(0.5, 0.65)
        return [a, b], events

    if hazard_type is HazardType.VFR_INTO_IMC:
        a = mk()
        alt = _pattern_alt(af, rng)
        t = 0.0
        events = [_ev(t, a.callsign, PatternPhase.DOWNWIND, 1.0, alt)]
        t += rng.uniform(10, 13)
        events.append(_ev(t, a.callsign, PatternPhase.DOWNWIND, 1.2, alt - 100))
        t += rng.uniform(10, 13)
        events.append(_ev(t, a.callsign, PatternPhase.BASE, math.hypot(0.8, 0.6),
                          alt - 250))
        t += rng.uniform(10, 13)
        events.append(_ev(t, a.callsign, PatternPhase.FINAL, 0.9, _alt_on_final(af, 0.9)))
        return [a], events

    if hazard_type is HazardType.MIDAIR_CONVERGING_ALTITUDE:
        a, b = mk(), mk()
        alt = _alt_on_final(af, 2.0) + rng.uniform(-50, 50)
        events = []
        t, d = 0.0, rng.uniform(2.0, 2.4)
        for _ in range(3):
            events.append(_ev(t, a.callsign, PatternPhase.STRAIGHT_IN_FINAL, d,
                              _alt_on_final(af, d)))
            t += rng.uniform(9, 12)
            d -= rng.uniform(0.5, 0.6)
        events.append(_ev(t, a.callsign, PatternPhase.GO_AROUND, max(d, 0.3),
                          _alt_on_final(af, max(d, 0.8))))
        tb = 0.0
        for q in (math.hypot(0.8, 1.0), math.hypot(0.8, 0.6), math.hypot(0.8, 0.25)):
            events.append(_ev(tb, b.callsign, PatternPhase.BASE, q, alt))
            tb += rng.uniform(10, 13)
        return [a, b], events

    raise GenerationError(f"no traffic script for {hazard_type}")


# ---------------------------------------------------------------------------
# Scenario sampling
# ---------------------------------------------------------------------------


def _adsb_snapshots(af: Airfield, aircraft: list[Aircraft],
                    events: list[PositionEvent]) -> list[AdsbState]:
    end_t = max(e.t for e in events)
    out = []
    for ac in aircraft:
        own = [e for e in events if e.callsign == ac.callsign]
        if not own:
            continue
        track = Track(af, own, end_t)
        first = track.events[0]
        x, y = track.points[0]
        lat, lon = local_to_latlon(af, x, y)
        v = track.velocity(first.t)
        speed = math.hypot(*v) * 3600.0
        heading = phase_heading(af, first.phase, first.side, first.announced_runway)
        out.append(AdsbState(
            t=0.0, lat=round(lat, 4), lon=round(lon, 4),
            alt_msl_ft=first.alt_ft, heading_deg=heading, speed_kt=round(speed, 0),
        ))
    return out


def sample_scenario(
    rng: random.Random,
    hazard_type: HazardType,
    airfield: Airfield = KHAF,
    scenario_id: str = "S000",
    split: str = "test",
    max_attempts: int = 20,
) -> Scenario:
    """Sample one scenario (without transcript/advisory) whose recomputed label
    matches the hazard type's target label; resamples on internal mismatch."""
    target = HAZARD_TYPE_LABELS[hazard_type]
    last_err: str | None = None
    for _ in range(max_attempts):
        aircraft, events = _build_traffic(rng, hazard_type, airfield)
        events.sort(key=lambda e: (e.t, e.callsign))
        metar = _sample_metar(rng, hazard_type, airfield)
        got = label_scenario(events, aircraft, metar, airfield)
        if got is not target:
            last_err = f"sampled events labeled {got.value}, wanted {target.value}"
            continue
        return Scenario(
            id=scenario_id,
            hazard_type=hazard_type,
            label3=target,
            label_binary=collapse_to_binary(target),
            metar_raw=emit_metar(metar),
            metar_decoded=decode_metar(metar),
            aircraft=tuple(aircraft),
            events=tuple(events),
            adsb=tuple(_adsb_snapshots(airfield, aircraft, events)),
            transcript_srt="",
            advisory_text="",
            split=split,
            duration_s=max(e.t for e in events),
            airfield=airfield,
        )
    raise GenerationError(
        f"could not realize {hazard_type.value} in {max_attempts} attempts: {last_err}"
    )


# ---------------------------------------------------------------------------
# Generator user message
# ---------------------------------------------------------------------------


def build_generator_user_message(s: Scenario) -> str:
    """Pack a sampled scenario into the transcript/advisory generation message."""
    if not s.aircraft:
        raise ValueError("scenario has no aircraft")
    lines = [
        f"SCENARIO: {s.hazard_type.value} ({s.label3.value})",
        f"METAR: {s.metar_raw}",
        f"DURATION: ~{round(s.duration_s)}s",
        "",
        "AIRCRAFT:",
    ]
    for ac in s.aircraft:
        tag = "NORDO" if ac.is_nordo else "radio"
        lines.append(f"  {ac.callsign} ({ac.type_name}) --- {tag}")
    lines.append("")
    lines.append("POSITION EVENTS:")
    for e in s.events:
        tag = "NORDO" if e.radio == "NORDO" else "radio"
        lines.append(
            f"  t={e.t:g}s  {e.callsign}  {e.phase.value}  {e.dist_nm:g}NM  "
            f"{e.alt_ft:g}ft  {tag}"
        )
    lines.append("")
    lines.append("Write the SRT transcript.")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Template transcript
# ---------------------------------------------------------------------------


def _runway_words(designator: str) -> str:
    return " ".join(NATO_DIGITS[d].lower() for d in designator)


_DIST_PHRASES = {
    0.25: "quarter-mile", 0.5: "half-mile", 0.75: "three-quarter-mile",
    1.0: "one-mile", 1.5: "one-and-a-half-mile", 2.0: "two-mile",
    2.5: "two-and-a-half-mile", 3.0: "three-mile",
}


def _dist_phrase(dist_nm: float) -> str | None:
    snapped = round(dist_nm * 4) / 4
    return _DIST_PHRASES.get(snapped)


def _intention_for(ac: Aircraft, events: list[PositionEvent]) -> str:
    phases = {e.phase for e in events}
    if PatternPhase.ON_RUNWAY in phases or PatternPhase.DEPARTURE in phases:
        return "departing"
    h = int(hashlib.sha256(ac.callsign.encode()).hexdigest(), 16)
    return "full stop" if h % 2 == 0 else "touch and go"


def _position_phrase(e: PositionEvent, af: Airfield, prev_phase: PatternPhase | None,
                     hazard: bool) -> str:
    side = e.side or af.pattern_side
    if e.phase is PatternPhase.CROSSWIND:
        return f"{side} crosswind"
    if e.phase is PatternPhase.DOWNWIND:
        return f"{side} downwind"
    if e.phase is PatternPhase.BASE:
        return f"{side} base"
    if e.phase is PatternPhase.FINAL:
        d = _dist_phrase(e.dist_nm)
        if prev_phase is PatternPhase.BASE:
            return f"turning {side} final"
        return f"{d} final" if d else "final"
    if e.phase is PatternPhase.SHORT_FINAL:
        d = _dist_phrase(e.dist_nm)
        if d and e.dist_nm > 0.45:
            return f"{d} final"
        return "short final"
    if e.phase is PatternPhase.STRAIGHT_IN_FINAL:
        d = _dist_phrase(e.dist_nm)
        prefix = f"{d} " if d else ""
        return f"{prefix}straight-in RNAV final"
    if e.phase is PatternPhase.GO_AROUND:
        return "going around" + (", traffic conflict on final" if hazard else "")
    if e.phase is PatternPhase.ON_RUNWAY:
        return "taking the runway for departure"
    if e.phase is PatternPhase.CLEAR_OF_RUNWAY:
        return "clear of the runway"
    if e.phase is PatternPhase.DEPARTURE:
        return "departing straight out"
    return e.phase.value.replace("_", " ")


def synthesize_transcript(
    s: Scenario,
    backend: str = "template",
    generate: Callable[[str, str], str] | None = None,
) -> Transcript:
    """Render the scenario's radio traffic as an SRT transcript.

    The template backend deterministically phrases each announced key event;
    the endpoint backend calls `generate(system_prompt, user_message)` and
    re-requests (up to 3 times) until the timing rules hold.
    """
    if backend == "endpoint":
        if generate is None:
            raise GenerationError("endpoint transcript backend requires a generate callable")
        violations = []
        for _ in range(3):
            raw = generate(prompts.TRANSCRIPT_GEN_SYSTEM_PROMPT,
                           build_generator_user_message(s))
            t = parse_srt(raw)
            violations = validate_timing(t)
            if not violations:
                return t
        raise GenerationError(f"endpoint transcript kept violating timing: {violations}")

    af = s.airfield
    hazard = s.label3 is SafetyLabel3.HAZARD
    hesitant = s.hazard_type is HazardType.VFR_INTO_IMC
    nordo_aircraft = [a for a in s.aircraft if a.is_nordo]
    intentions = {
        a.callsign: _intention_for(a, [e for e in s.events if e.callsign == a.callsign])
        for a in s.aircraft
    }
    equipped = {a.callsign for a in s.aircraft if not a.is_nordo}

    # Key events: announced calls from equipped aircraft, skipping repeated
    # phases unless the scenario is a conflict.
    prev_phase: dict[str, PatternPhase] = {}
    calls: list[tuple[PositionEvent, str]] = []
    for e in sorted(s.events, key=lambda e: (e.t, e.callsign)):
        if e.callsign not in equipped or not e.announced:
            prev_phase.setdefault(e.callsign, None)
            continue
        if prev_phase.get(e.callsign) == e.phase and s.label3 is SafetyLabel3.NOMINAL:
            continue
        pos = _position_phrase(e, af, prev_phase.get(e.callsign), hazard)
        prev_phase[e.callsign] = e.phase
        calls.append((e, pos))
    calls = calls[:10]

    mention_idx = 1 if len(calls) > 1 else 0
    cues: list[SrtCue] = []
    prev_end = None
    t_shift = calls[0][0].t if calls else 0.0
    for i, (e, pos) in enumerate(calls):
        rwy = _runway_words(e.announced_runway or af.runway_designator)
        segments = [
            "Half Moon Bay traffic",
            nato_spell(e.callsign),
            ("uh, " + pos) if hesitant and i > 0 else pos,
            f"runway {rwy}",
        ]
        if e.phase not in (PatternPhase.GO_AROUND, PatternPhase.CLEAR_OF_RUNWAY,
                           PatternPhase.ON_RUNWAY):
            segments.append(intentions[e.callsign])
        if nordo_aircraft and i == mention_idx:
            ghost = nordo_aircraft[0]
            segments.append(f"traffic is a {ghost.type_name} on the downwind no radio")
        text = ", ".join(segments) + ", Half Moon Bay."

        dur = min(max(2.6 + 0.18 * len(text.split()), 3.0), 6.0)
        start = e.t - t_shift
        if prev_end is not None:
            start = min(max(start, prev_end + 3.0), prev_end + 8.0)
        else:
            start = 0.0
        end = start + dur
        if end >= 89.5:
            break
        cues.append(SrtCue(
            index=len(cues) + 1,
            start_ms=round(start * 1000),
            end_ms=round(end * 1000),
            text=text,
        ))
        prev_end = end
    return Transcript(cues=tuple(cues))


# ---------------------------------------------------------------------------
# Template advisory
# ---------------------------------------------------------------------------


def synthesize_advisory(
    s: Scenario,
    backend: str = "template",
    generate: Callable[[str, str], str] | None = None,
) -> Advisory:
    """Ground-truth advisory in FAA phrasing; template mode renders the rule
    findings deterministically."""
    if backend == "endpoint":
        if generate is None:
            raise GenerationError("endpoint advisory backend requires a generate callable")
        text = generate(prompts.ADVISORY_GEN_SYSTEM_PROMPT,
                        build_generator_user_message(s)).strip()
        return Advisory(text=text)

    af = s.airfield
    rwy = af.runway_designator
    ac = list(s.aircraft)
    a = ac[0]
    b = ac[1] if len(ac) > 1 else a
    ht = s.hazard_type

    if ht is HazardType.NOMINAL_SINGLE_AIRCRAFT:
        text = (
            f"Normal operations at {af.icao_id}: {a.callsign} ({a.type_name}) is the "
            f"only aircraft in the pattern and is announcing each leg for runway {rwy}. "
            f"No conflicting traffic observed. Continue standard position reports."
        )
    elif ht is HazardType.NOMINAL_INSTRUMENT_APPROACH:
        text = (
            f"Normal operations at {af.icao_id}: {a.callsign} ({a.type_name}) is inbound "
            f"on a straight-in instrument approach to runway {rwy}, announcing at "
            f"standard distances. No conflicting traffic observed. Continue the approach."
        )
    elif ht is HazardType.SILENT_TRAFFIC:
        ghost = next(x for x in ac if x.is_nordo)
        talker = next((x for x in ac if not x.is_nordo), a)
        text = (
            f"Advisory: a {ghost.type_name} is operating in the pattern with no radio, "
            f"last observed on the downwind for runway {rwy}. {talker.callsign}, "
            f"maintain visual scanning and extend spacing as needed. All traffic use "
            f"caution; the no-radio aircraft will not respond to calls."
        )
    elif ht is HazardType.MISSING_POSITION_CALLS:
        text = (
            f"Advisory: {a.callsign} ({a.type_name}) is in the pattern for runway {rwy} "
            f"but has not announced one or more legs. {a.callsign}, report position. "
            f"Other traffic use caution until the aircraft is in sight."
        )
    elif ht is HazardType.WRONG_PATTERN_DIRECTION:
        wrong = "left" if af.pattern_side == "right" else "right"
        text = (
            f"Advisory: {a.callsign} ({a.type_name}) is flying a {wrong}-hand pattern "
            f"for runway {rwy}, opposite the published {af.pattern_side} traffic. "
            f"{a.callsign}, correct to {af.pattern_side} traffic on the next leg. "
            f"Other traffic sequence with caution."
        )
    elif ht is HazardType.CONVERGING_FINAL_SEPARATED:
        text = (
            f"Advisory: {a.callsign} ({a.type_name}) and {b.callsign} ({b.type_name}) "
            f"are both inbound on final for runway {rwy} with more than a half mile of "
            f"spacing. {b.callsign}, maintain spacing behind {a.callsign}. "
            f"{a.callsign}, expedite the landing and clear the runway promptly."
        )
    elif ht is HazardType.SIMULTANEOUS_FINAL:
        text = (
            f"Traffic alert: {a.callsign}, {a.type_name} on straight-in final runway "
            f"{rwy}, and {b.callsign}, {b.type_name} short final runway {rwy}, "
            f"converging on the same runway. {a.callsign}, go around immediately; "
            f"{b.callsign}, continue landing or clear the runway without delay; both "
            f"aircraft maintain visual separation."
        )
    elif ht is HazardType.RUNWAY_INCURSION_RISK:
        text = (
            f"Safety alert: {b.callsign} ({b.type_name}) is on runway {rwy} while "
            f"{a.callsign} ({a.type_name}) is on short final. {a.callsign}, be prepared "
            f"to go around. {b.callsign}, clear the runway immediately and report clear."
        )
    elif ht is HazardType.GO_AROUND_CONFLICT:
        text = (
            f"Safety alert: {a.callsign} ({a.type_name}) is going around runway {rwy} "
            f"while {b.callsign} ({b.type_name}) is departing the same runway. "
            f"{a.callsign}, offset to the pattern side and climb; {b.callsign}, continue "
            f"straight out and report clear of the climb path. Maintain visual separation."
        )
    elif ht is HazardType.WRONG_RUNWAY_CALL:
        text = (
            f"Safety alert: {b.callsign} ({b.type_name}) announced an approach to runway "
            f"{af.reciprocal_designator} while traffic is using runway {rwy}; "
            f"opposite-direction conflict possible. {b.callsign}, confirm the runway in "
            f"use and re-enter accordingly. {a.callsign}, continue with caution and "
            f"maintain visual scanning."
        )
    elif ht is HazardType.VFR_INTO_IMC:
        text = (
            f"Safety alert: {a.callsign} ({a.type_name}) is maneuvering in the traffic "
            f"pattern in instrument conditions. {a.callsign}, climb if able, fly away "
            f"from terrain, and request assistance. Other traffic remain clear of the "
            f"pattern until conditions improve."
        )
    elif ht is HazardType.MIDAIR_CONVERGING_ALTITUDE:
        text = (
            f"Safety alert: {a.callsign} ({a.type_name}) and {b.callsign} "
            f"({b.type_name}) are converging at the same altitude near the final "
            f"approach course for runway {rwy}. {a.callsign}, maintain visual contact "
            f"and give way as required; {b.callsign}, turn away from final until the "
            f"conflict is resolved."
        )
    else:
        raise GenerationError(f"no advisory template for {ht}")
    return Advisory(text=text)


# ---------------------------------------------------------------------------
# Dataset assembly
# ---------------------------------------------------------------------------

CLASS_HAZARD_TYPES: dict[str, tuple[HazardType, ...]] = {
    "nominal": (
        HazardType.NOMINAL_SINGLE_AIRCRAFT,
        HazardType.NOMINAL_INSTRUMENT_APPROACH,
    ),
    "warning": (
        HazardType.SILENT_TRAFFIC,
        HazardType.MISSING_POSITION_CALLS,
        HazardType.WRONG_PATTERN_DIRECTION,
        HazardType.CONVERGING_FINAL_SEPARATED,
    ),
    "hazard": (
        HazardType.SIMULTANEOUS_FINAL,
        HazardType.RUNWAY_INCURSION_RISK,
        HazardType.GO_AROUND_CONFLICT,
        HazardType.WRONG_RUNWAY_CALL,
        HazardType.VFR_INTO_IMC,
        HazardType.MIDAIR_CONVERGING_ALTITUDE,
    ),
}


def plan_dataset(cfg: GenConfig) -> list[tuple[str, HazardType, str]]:
    """Deterministic (class, hazard_type, split) plan: the ICL scenarios come
    first (icl_per_class each), then classes interleave with hazard types
    assigned round-robin within each class."""
    type_cycle = {cls: 0 for cls in CLASS_HAZARD_TYPES}
    remaining = dict(cfg.class_targets)

    def next_type(cls: str) -> HazardType:
        types = CLASS_HAZARD_TYPES[cls]
        ht = types[type_cycle[cls] % len(types)]
        type_cycle[cls] += 1
        remaining[cls] -= 1
        return ht

    plan: list[tuple[str, HazardType, str]] = []
    for cls in ("nominal", "warning", "hazard"):
        for _ in range(cfg.icl_per_class):
            plan.append((cls, next_type(cls), "icl"))
    order = ("nominal", "warning", "hazard")
    i = 0
    while any(v > 0 for v in remaining.values()):
        cls = order[i % 3]
        i += 1
        if remaining[cls] > 0:
            plan.append((cls, next_type(cls), "test"))
    return plan


def build_dataset(cfg: GenConfig, generate: Callable[[str, str], str] | None = None) -> Dataset:
    """Build the full benchmark: sample, synthesize, label-check, split."""
    plan = plan_dataset(cfg)
    scenarios: list[Scenario] = []
    for index, (cls, hazard_type, split) in enumerate(plan):
        rng = substream(cfg.seed, index)
        sid = f"S{index + 1:03d}"
        s = sample_scenario(rng, hazard_type, cfg.airport, sid, split)
        t = synthesize_transcript(s, cfg.transcript_backend, generate)
        adv = synthesize_advisory(s, cfg.transcript_backend, generate)
        s = replace(s, transcript_srt=emit_srt(t), advisory_text=adv.text)
        recomputed = label_scenario(s.events, s.aircraft, parse_metar(s.metar_raw),
                                    cfg.airport)
        if recomputed is not s.label3:
            raise GenerationError(f"{sid}: stored label diverges from rule engine")
        scenarios.append(s)
    return Dataset(scenarios=tuple(scenarios))


# ---------------------------------------------------------------------------
# On-disk layout
# ---------------------------------------------------------------------------


def _scenario_meta(s: Scenario) -> dict:
    return {
        "id": s.id,
        "hazard_type": s.hazard_type.value,
        "label3": s.label3.value,
        "label_binary": s.label_binary.value,
        "split": s.split,
        "duration_s": s.duration_s,
        "metar_raw": s.metar_raw,
        "metar_decoded": s.metar_decoded,
        "aircraft": [
            {"callsign": a.callsign, "type_name": a.type_name, "radio": a.radio}
            for a in s.aircraft
        ],
        "events": [
            {
                "t": e.t, "callsign": e.callsign, "phase": e.phase.value,
                "dist_nm": e.dist_nm, "alt_ft": e.alt_ft, "radio": e.radio,
                "announced": e.announced, "side": e.side,
                "announced_runway": e.announced_runway,
            }
            for e in s.events
        ],
    }


def save_dataset(ds: Dataset, root: Path | str, cfg: GenConfig | None = None) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for s in ds.scenarios:
        d = root / s.id
        d.mkdir(exist_ok=True)
        (d / "metar.txt").write_text(s.metar_raw + "\n", encoding="utf-8")
        (d / "transcript.srt").write_text(s.transcript_srt, encoding="utf-8")
        (d / "advisory.txt").write_text(s.advisory_text + "\n", encoding="utf-8")
        (d / "meta.json").write_text(
            json.dumps(_scenario_meta(s), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        (d / "adsb.json").write_text(
            json.dumps(
                [
                    {"t": a.t, "lat": a.lat, "lon": a.lon, "alt_msl_ft": a.alt_msl_ft,
                     "heading_deg": a.heading_deg, "speed_kt": a.speed_kt}
                    for a in s.adsb
                ],
                indent=2, sort_keys=True,
            ) + "\n",
            encoding="utf-8",
        )
    (root / "manifest.csv").write_text(ds.manifest_csv(), encoding="utf-8")
    if cfg is not None:
        (root / "gen_config.json").write_text(
            json.dumps(
                {
                    "seed": cfg.seed,
                    "n_scenarios": cfg.n_scenarios,
                    "class_targets": cfg.class_targets,
                    "icl_per_class": cfg.icl_per_class,
                    "transcript_backend": cfg.transcript_backend,
                },
                indent=2, sort_keys=True,
            ) + "\n",
            encoding="utf-8",
        )


def load_dataset(root: Path | str) -> Dataset:
    root = Path(root)
    manifest = (root / "manifest.csv").read_text(encoding="utf-8")
    scenarios = []
    for row in csv.DictReader(io.StringIO(manifest)):
        d = root / row["id"]
        meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
        adsb = json.loads((d / "adsb.json").read_text(encoding="utf-8"))
        scenarios.append(Scenario(
            id=meta["id"],
            hazard_type=HazardType(meta["hazard_type"]),
            label3=SafetyLabel3(meta["label3"]),
            label_binary=collapse_to_binary(SafetyLabel3(meta["label3"])),
            metar_raw=meta["metar_raw"],
            metar_decoded=meta["metar_decoded"],
            aircraft=tuple(Aircraft(**a) for a in meta["aircraft"]),
            events=tuple(
                PositionEvent(
                    t=e["t"], callsign=e["callsign"], phase=PatternPhase(e["phase"]),
                    dist_nm=e["dist_nm"], alt_ft=e["alt_ft"], radio=e["radio"],
                    announced=e["announced"], side=e["side"],
                    announced_runway=e["announced_runway"],
                )
                for e in meta["events"]
            ),
            adsb=tuple(AdsbState(**a) for a in adsb),
            transcript_srt=(d / "transcript.srt").read_text(encoding="utf-8"),
            advisory_text=(d / "advisory.txt").read_text(encoding="utf-8").rstrip("\n"),
            split=meta["split"],
            duration_s=meta["duration_s"],
        ))
    return Dataset(scenarios=tuple(scenarios))
