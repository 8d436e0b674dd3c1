"""METAR parsing, human-readable decoding, and flight-category classification.

The grammar covers the US-style reports this project generates and consumes:
station, observation time, AUTO, wind (calm/variable/gusting), statute-mile
visibility with mixed fractions, present-weather codes, cloud layers, the
temperature/dewpoint group, and an inHg altimeter.  Everything from RMK (or the
first unrecognized trailing token) onward is kept verbatim so reports re-emit
losslessly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction


class MetarParseError(ValueError):
    def __init__(self, message: str, token: str, offset: int):
        super().__init__(f"{message}: {token!r} at byte {offset}")
        self.token = token
        self.offset = offset


@dataclass(frozen=True)
class Wind:
    dir_deg: int | None  # None = variable ("VRB")
    speed_kt: int
    gust_kt: int | None = None

    @property
    def calm(self) -> bool:
        return self.speed_kt == 0 and (self.dir_deg in (0, None))


@dataclass(frozen=True)
class WxPhenomenon:
    intensity: str  # "", "-", "+"
    code: str  # descriptor+phenomenon, e.g. "BR", "RA", "SHRA"


@dataclass(frozen=True)
class CloudLayer:
    coverage: str  # SKC | CLR | FEW | SCT | BKN | OVC
    base_ft_agl: int | None  # None for SKC/CLR


@dataclass(frozen=True)
class Metar:
    station: str
    day_hour_min_z: str
    auto: bool
    wind: Wind
    visibility_sm: Fraction
    visibility_less_than: bool
    wx_phenomena: tuple[WxPhenomenon, ...]
    cloud_layers: tuple[CloudLayer, ...]
    temp_c: int
    dewpoint_c: int
    altimeter_inhg: float
    remarks: str = ""

    def __post_init__(self):
        if self.visibility_sm < 0:
            raise ValueError("visibility must be nonnegative")
        if self.dewpoint_c > self.temp_c + 1:
            raise ValueError("dewpoint above temperature beyond rounding slack")


class FlightCategory(str, Enum):
    VFR = "VFR"
    MVFR = "MVFR"
    IFR = "IFR"
    LIFR = "LIFR"


_WIND_RE = re.compile(r"^(VRB|\d{3})(\d{2,3})(?:G(\d{2,3}))?KT$")
_TIME_RE = re.compile(r"^(\d{6})Z$")
_VIS_RE = re.compile(r"^(M?)(\d{1,2})?(?: ?(\d)/(\d{1,2}))?SM$")
_CLOUD_RE = re.compile(r"^(FEW|SCT|BKN|OVC)(\d{3})$")
_TEMP_RE = re.compile(r"^(M?\d{1,2})/(M?\d{1,2})$")
_ALT_RE = re.compile(r"^A(\d{4})$")

_WX_CODES = (
    "TS", "SH", "FZ", "DR", "BL", "MI", "BC", "PR",  # descriptors
    "RA", "DZ", "SN", "SG", "IC", "PL", "GR", "GS", "UP",  # precipitation
    "BR", "FG", "FU", "VA", "DU", "SA", "HZ", "PY",  # obscurations
    "PO", "SQ", "FC", "SS", "DS",
)
_WX_RE = re.compile(r"^([-+]?)((?:%s)+)$" % "|".join(_WX_CODES))

_OBSCURATIONS = {"BR", "FG", "FU", "VA", "DU", "SA", "HZ", "PY"}

_WX_NAMES = {
    "BR": "mist", "FG": "fog", "HZ": "haze", "FU": "smoke", "RA": "rain",
    "DZ": "drizzle", "SN": "snow", "TS": "thunderstorm", "SH": "showers",
    "FZ": "freezing", "GR": "hail", "UP": "precipitation", "SQ": "squalls",
    "VA": "volcanic ash", "DU": "dust", "SA": "sand", "PO": "dust whirls",
    "FC": "funnel cloud", "SS": "sandstorm", "DS": "duststorm", "SG": "snow grains",
    "IC": "ice crystals", "PL": "ice pellets", "GS": "small hail", "PY": "spray",
    "DR": "drifting", "BL": "blowing", "MI": "shallow", "BC": "patches of",
    "PR": "partial",
}

_COVERAGE_NAMES = {"FEW": "few clouds", "SCT": "scattered clouds",
                   "BKN": "broken", "OVC": "overcast"}


def parse_metar(raw: str) -> Metar:
    """Parse a raw METAR string into its structured form.

    Unknown trailing tokens (and everything from RMK on) are preserved verbatim
    in `remarks`.  Malformed wind/visibility/altimeter groups raise
    MetarParseError naming the token and its byte offset.
    """
    if not raw or not raw.strip():
        raise MetarParseError("empty METAR", raw, 0)

    tokens: list[tuple[str, int]] = []
    for m in re.finditer(r"\S+", raw):
        tokens.append((m.group(0), m.start()))
    idx = 0

    def peek() -> str | None:
        return tokens[idx][0] if idx < len(tokens) else None

    tok, off = tokens[idx]
    if not re.match(r"^[A-Z0-9]{4}$", tok):
        raise MetarParseError("bad station identifier", tok, off)
    station = tok
    idx += 1

    if idx >= len(tokens):
        raise MetarParseError("missing observation time", "", len(raw))
    tok, off = tokens[idx]
    m = _TIME_RE.match(tok)
    if not m:
        raise MetarParseError("bad observation time", tok, off)
    obs_time = m.group(1)
    idx += 1

    auto = False
    if peek() == "AUTO":
        auto = True
        idx += 1

    if idx >= len(tokens):
        raise MetarParseError("missing wind group", "", len(raw))
    tok, off = tokens[idx]
    m = _WIND_RE.match(tok)
    if not m:
        if tok.endswith("KT") or re.match(r"^(VRB|\d{3,})", tok):
            raise MetarParseError("malformed wind group", tok, off)
        raise MetarParseError("expected wind group", tok, off)
    wdir = None if m.group(1) == "VRB" else int(m.group(1))
    wind = Wind(
        dir_deg=wdir,
        speed_kt=int(m.group(2)),
        gust_kt=int(m.group(3)) if m.group(3) else None,
    )
    idx += 1

    if idx >= len(tokens):
        raise MetarParseError("missing visibility group", "", len(raw))
    tok, off = tokens[idx]
    # A whole-mile part followed by a fraction arrives as two tokens ("1 1/2SM").
    if re.match(r"^\d{1,2}$", tok) and idx + 1 < len(tokens) and tokens[idx + 1][0].endswith("SM"):
        tok = tok + " " + tokens[idx + 1][0]
        idx += 1
    m = _VIS_RE.match(tok)
    if not m:
        if tok.endswith("SM"):
            raise MetarParseError("malformed visibility group", tok, off)
        raise MetarParseError("expected visibility group", tok, off)
    vis = Fraction(0)
    if m.group(2):
        vis += Fraction(int(m.group(2)))
    if m.group(3):
        denom = int(m.group(4))
        if denom == 0:
            raise MetarParseError("malformed visibility group", tok, off)
        vis += Fraction(int(m.group(3)), denom)
    vis_less_than = m.group(1) == "M"
    idx += 1

    wx: list[WxPhenomenon] = []
    while (tok := peek()) is not None:
        m = _WX_RE.match(tok)
        if not m:
            break
        wx.append(WxPhenomenon(intensity=m.group(1), code=m.group(2)))
        idx += 1

    layers: list[CloudLayer] = []
    while (tok := peek()) is not None:
        if tok in ("SKC", "CLR"):
            layers.append(CloudLayer(coverage=tok, base_ft_agl=None))
            idx += 1
            continue
        m = _CLOUD_RE.match(tok)
        if not m:
            break
        layers.append(CloudLayer(coverage=m.group(1), base_ft_agl=int(m.group(2)) * 100))
        idx += 1

    if idx >= len(tokens):
        raise MetarParseError("missing temperature group", "", len(raw))
    tok, off = tokens[idx]
    m = _TEMP_RE.match(tok)
    if not m:
        raise MetarParseError("bad temperature/dewpoint group", tok, off)

    def _temp(s: str) -> int:
        return -int(s[1:]) if s.startswith("M") else int(s)

    temp_c, dew_c = _temp(m.group(1)), _temp(m.group(2))
    idx += 1

    if idx >= len(tokens):
        raise MetarParseError("missing altimeter group", "", len(raw))
    tok, off = tokens[idx]
    m = _ALT_RE.match(tok)
    if not m:
        if tok.startswith("A") and any(c.isdigit() for c in tok):
            raise MetarParseError("malformed altimeter group", tok, off)
        raise MetarParseError("expected altimeter group", tok, off)
    altimeter = int(m.group(1)) / 100.0
    idx += 1

    remarks = ""
    if idx < len(tokens):
        remarks = raw[tokens[idx][1]:].strip()

    return Metar(
        station=station,
        day_hour_min_z=obs_time,
        auto=auto,
        wind=wind,
        visibility_sm=vis,
        visibility_less_than=vis_less_than,
        wx_phenomena=tuple(wx),
        cloud_layers=tuple(layers),
        temp_c=temp_c,
        dewpoint_c=dew_c,
        altimeter_inhg=altimeter,
        remarks=remarks,
    )


def _vis_token(m: Metar) -> str:
    whole = m.visibility_sm.numerator // m.visibility_sm.denominator
    frac = m.visibility_sm - whole
    prefix = "M" if m.visibility_less_than else ""
    if frac == 0:
        return f"{prefix}{whole}SM"
    part = f"{frac.numerator}/{frac.denominator}"
    if whole == 0:
        return f"{prefix}{part}SM"
    return f"{prefix}{whole} {part}SM"


def emit_metar(m: Metar) -> str:
    """Canonical re-emission; parse_metar(emit_metar(m)) round-trips."""
    parts = [m.station, f"{m.day_hour_min_z}Z"]
    if m.auto:
        parts.append("AUTO")
    wdir = "VRB" if m.wind.dir_deg is None else f"{m.wind.dir_deg:03d}"
    gust = f"G{m.wind.gust_kt:02d}" if m.wind.gust_kt is not None else ""
    parts.append(f"{wdir}{m.wind.speed_kt:02d}{gust}KT")
    parts.append(_vis_token(m))
    for wx in m.wx_phenomena:
        parts.append(f"{wx.intensity}{wx.code}")
    for layer in m.cloud_layers:
        if layer.base_ft_agl is None:
            parts.append(layer.coverage)
        else:
            parts.append(f"{layer.coverage}{layer.base_ft_agl // 100:03d}")

    def _t(v: int) -> str:
        return f"M{-v:02d}" if v < 0 else f"{v:02d}"

    parts.append(f"{_t(m.temp_c)}/{_t(m.dewpoint_c)}")
    parts.append(f"A{round(m.altimeter_inhg * 100):04d}")
    if m.remarks:
        parts.append(m.remarks)
    return " ".join(parts)


def ceiling_ft(m: Metar) -> int | None:
    """Lowest broken or overcast layer base (ft AGL), or None."""
    bases = [l.base_ft_agl for l in m.cloud_layers
             if l.coverage in ("BKN", "OVC") and l.base_ft_agl is not None]
    return min(bases) if bases else None


def flight_category(m: Metar) -> FlightCategory:
    vis = float(m.visibility_sm)
    ceil = ceiling_ft(m)
    if vis < 1.0 or (ceil is not None and ceil < 500):
        return FlightCategory.LIFR
    if vis < 3.0 or (ceil is not None and ceil < 1000):
        return FlightCategory.IFR
    if vis <= 5.0 or (ceil is not None and ceil <= 3000):
        return FlightCategory.MVFR
    return FlightCategory.VFR


_CATEGORY_NAMES = {
    FlightCategory.VFR: "VFR",
    FlightCategory.MVFR: "Marginal VFR",
    FlightCategory.IFR: "IFR",
    FlightCategory.LIFR: "Low IFR",
}


def _vis_phrase(m: Metar) -> str:
    vis = m.visibility_sm
    if vis.denominator == 1:
        vis_txt = str(vis.numerator)
    else:
        whole = vis.numerator // vis.denominator
        frac = vis - whole
        part = f"{frac.numerator}/{frac.denominator}"
        vis_txt = f"{whole} {part}" if whole else part
    if m.visibility_less_than:
        vis_txt = "less than " + vis_txt
    phrase = f"{vis_txt} SM visibility"
    wx_bits = []
    for wx in m.wx_phenomena:
        name = " ".join(_WX_NAMES.get(wx.code[i:i + 2], wx.code[i:i + 2].lower())
                        for i in range(0, len(wx.code), 2))
        # Intensity qualifies precipitation; "light mist" would be redundant.
        if wx.intensity == "+" :
            name = "heavy " + name
        elif wx.intensity == "-" and wx.code not in _OBSCURATIONS:
            name = "light " + name
        wx_bits.append(name)
    if wx_bits:
        phrase += " in " + " and ".join(wx_bits)
    return phrase


def _ceiling_phrase(m: Metar) -> str:
    ceil = ceiling_ft(m)
    if ceil is None:
        return "no ceiling"
    cover = next(l.coverage for l in m.cloud_layers
                 if l.base_ft_agl == ceil and l.coverage in ("BKN", "OVC"))
    return f"{_COVERAGE_NAMES[cover]} ceiling at {ceil:,} ft"


def _wind_phrase(m: Metar) -> str:
    w = m.wind
    if w.calm:
        return "wind calm"
    if w.dir_deg is None:
        base = f"wind variable at {w.speed_kt} kt"
    else:
        base = f"wind {w.dir_deg}° at {w.speed_kt} kt"
    if w.gust_kt is not None:
        base += f" gusting {w.gust_kt} kt"
    return base


def decode_metar(m: Metar) -> str:
    """One-line English decoding: category, visibility/weather, ceiling, wind,
    temperature/dewpoint."""
    category = _CATEGORY_NAMES[flight_category(m)]
    return (
        f"{category} — {_vis_phrase(m)}, {_ceiling_phrase(m)}, "
        f"{_wind_phrase(m)}, {m.temp_c}°C / dewpoint {m.dewpoint_c}°C"
    )
