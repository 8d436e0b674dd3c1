"""SRT transcripts of CTAF radio traffic and FAA self-announcement phraseology.

Covers parsing/emitting SubRip text, checking the generator's timing rules
(utterance length, inter-call gap, total duration, line cap), NATO-phonetic
callsign spelling ("niner" for 9, standard words otherwise), and decomposing a
self-announced call into callsign / position / runway / intention.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .airspace import N_NUMBER_RE, PatternPhase


class SrtParseError(ValueError):
    def __init__(self, message: str, block: int):
        super().__init__(f"block {block}: {message}")
        self.block = block


@dataclass(frozen=True)
class SrtCue:
    index: int
    start_ms: int
    end_ms: int
    text: str

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("cue index must be positive")
        if self.start_ms >= self.end_ms:
            raise ValueError("cue start must precede end")


@dataclass(frozen=True)
class Transcript:
    cues: tuple[SrtCue, ...] = ()

    def __post_init__(self):
        prev: SrtCue | None = None
        for cue in self.cues:
            if prev is not None:
                if cue.index <= prev.index:
                    raise ValueError("cue indices must be strictly increasing")
                if cue.start_ms < prev.end_ms:
                    raise ValueError("cues must not overlap")
            prev = cue

    @property
    def word_count(self) -> int:
        return sum(len(c.text.split()) for c in self.cues)


_TS_RE = re.compile(r"^(\d{2,}):(\d{2}):(\d{2}),(\d{3})$")


def _parse_ts(text: str, block: int) -> int:
    m = _TS_RE.match(text.strip())
    if not m:
        raise SrtParseError(f"bad timestamp {text!r}", block)
    h, mi, s, ms = (int(g) for g in m.groups())
    if mi >= 60 or s >= 60:
        raise SrtParseError(f"bad timestamp {text!r}", block)
    return ((h * 60 + mi) * 60 + s) * 1000 + ms


def _format_ts(ms: int) -> str:
    s, ms = divmod(ms, 1000)
    mi, s = divmod(s, 60)
    h, mi = divmod(mi, 60)
    return f"{h:02d}:{mi:02d}:{s:02d},{ms:03d}"


def parse_srt(text: str) -> Transcript:
    """Parse SRT text into a Transcript; empty input yields an empty transcript."""
    stripped = text.strip()
    if not stripped:
        return Transcript()
    blocks = re.split(r"\n\s*\n", stripped)
    cues: list[SrtCue] = []
    last_index = 0
    last_end = -1
    for n, block in enumerate(blocks, start=1):
        lines = [ln.rstrip("\r") for ln in block.splitlines() if ln.strip()]
        if len(lines) < 2:
            raise SrtParseError("expected index, timing and text lines", n)
        if not lines[0].strip().isdigit():
            raise SrtParseError(f"bad cue index {lines[0]!r}", n)
        index = int(lines[0])
        if index <= last_index:
            raise SrtParseError(f"non-monotone cue index {index}", n)
        timing = lines[1].split("-->")
        if len(timing) != 2:
            raise SrtParseError(f"bad timing line {lines[1]!r}", n)
        start_ms = _parse_ts(timing[0], n)
        end_ms = _parse_ts(timing[1], n)
        if start_ms >= end_ms:
            raise SrtParseError("cue start not before end", n)
        if start_ms < last_end:
            raise SrtParseError("overlapping cues", n)
        text_body = " ".join(lines[2:]).strip()
        cues.append(SrtCue(index=index, start_ms=start_ms, end_ms=end_ms, text=text_body))
        last_index = index
        last_end = end_ms
    return Transcript(cues=tuple(cues))


def emit_srt(t: Transcript) -> str:
    """Canonical SRT rendering; round-trips through parse_srt."""
    if not t.cues:
        return ""
    blocks = [
        f"{c.index}\n{_format_ts(c.start_ms)} --> {_format_ts(c.end_ms)}\n{c.text}"
        for c in t.cues
    ]
    return "\n\n".join(blocks) + "\n"


# Generator timing contract.
UTTERANCE_MIN_S = 3.0
UTTERANCE_MAX_S = 6.0
GAP_MIN_S = 3.0
GAP_MAX_S = 8.0
TOTAL_MAX_S = 90.0
MAX_LINES = 10


@dataclass(frozen=True)
class TimingViolation:
    kind: str  # utterance_duration | gap | total_duration | max_lines | start_nonzero
    cue_index: int | None
    detail: str


def validate_timing(t: Transcript) -> list[TimingViolation]:
    """Check the transcript-generation timing rules; violations are data, not errors."""
    out: list[TimingViolation] = []
    if not t.cues:
        return out
    if len(t.cues) > MAX_LINES:
        out.append(TimingViolation("max_lines", None,
                                   f"{len(t.cues)} cues exceed the {MAX_LINES}-line cap"))
    if t.cues[0].start_ms != 0:
        out.append(TimingViolation("start_nonzero", t.cues[0].index,
                                   f"first cue starts at {t.cues[0].start_ms} ms"))
    for cue in t.cues:
        dur = (cue.end_ms - cue.start_ms) / 1000.0
        if not UTTERANCE_MIN_S <= dur <= UTTERANCE_MAX_S:
            out.append(TimingViolation("utterance_duration", cue.index,
                                       f"utterance lasts {dur:.3f} s"))
    for prev, cur in zip(t.cues, t.cues[1:]):
        gap = (cur.start_ms - prev.end_ms) / 1000.0
        if not GAP_MIN_S <= gap <= GAP_MAX_S:
            out.append(TimingViolation("gap", cur.index, f"gap of {gap:.3f} s before cue"))
    if t.cues[-1].end_ms / 1000.0 >= TOTAL_MAX_S:
        out.append(TimingViolation("total_duration", t.cues[-1].index,
                                   f"transcript ends at {t.cues[-1].end_ms / 1000.0:.3f} s"))
    return out


# ---------------------------------------------------------------------------
# NATO phonetics
# ---------------------------------------------------------------------------

NATO_LETTERS = {
    "A": "Alpha", "B": "Bravo", "C": "Charlie", "D": "Delta", "E": "Echo",
    "F": "Foxtrot", "G": "Golf", "H": "Hotel", "I": "India", "J": "Juliett",
    "K": "Kilo", "L": "Lima", "M": "Mike", "N": "November", "O": "Oscar",
    "P": "Papa", "Q": "Quebec", "R": "Romeo", "S": "Sierra", "T": "Tango",
    "U": "Uniform", "V": "Victor", "W": "Whiskey", "X": "X-ray", "Y": "Yankee",
    "Z": "Zulu",
}
# "niner" for 9; otherwise plain digit words (no "tree"/"fife").
NATO_DIGITS = {
    "0": "Zero", "1": "One", "2": "Two", "3": "Three", "4": "Four",
    "5": "Five", "6": "Six", "7": "Seven", "8": "Eight", "9": "Niner",
}
_WORD_TO_CHAR = {w.lower(): c for c, w in NATO_LETTERS.items()}
_WORD_TO_CHAR.update({w.lower(): d for d, w in NATO_DIGITS.items()})
_WORD_TO_CHAR["nine"] = "9"
_WORD_TO_CHAR["xray"] = "X"


def nato_spell(callsign: str) -> str:
    """Spell a tail number phonetically: N910YZ -> November Niner One Zero Yankee Zulu."""
    if not N_NUMBER_RE.match(callsign):
        raise ValueError(f"invalid N-number callsign: {callsign!r}")
    words = []
    for ch in callsign:
        words.append(NATO_DIGITS[ch] if ch.isdigit() else NATO_LETTERS[ch])
    return " ".join(words)


def nato_decode(words: str) -> str:
    """Inverse of nato_spell; raises ValueError on unknown words."""
    chars = []
    for w in words.split():
        key = w.lower().strip(",.")
        if key not in _WORD_TO_CHAR:
            raise ValueError(f"not a phonetic word: {w!r}")
        chars.append(_WORD_TO_CHAR[key])
    return "".join(chars)


# ---------------------------------------------------------------------------
# Radio-call parsing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RadioCall:
    callsign: str | None
    phase: PatternPhase | None
    position_text: str
    runway: str | None
    intention: str  # full_stop | touch_and_go | go_around | departure | other
    intention_text: str
    raw_text: str
    mentions_nordo: bool = False


_FRAME_HEAD_RE = re.compile(r"^\s*half moon bay traffic\s*,\s*", re.IGNORECASE)
_FRAME_TAIL_RE = re.compile(r"\s*,\s*half moon bay[.\s]*$", re.IGNORECASE)

_DIGIT_WORDS = "zero|one|two|three|four|five|six|seven|eight|niner|nine"
_RUNWAY_RE = re.compile(
    r"\brunway\s+((?:(?:%s)[\s-]*)+)" % _DIGIT_WORDS, re.IGNORECASE
)

# Ordered so that more specific phrases win ("short final" before "final").
_PHASE_PATTERNS: list[tuple[str, PatternPhase]] = [
    (r"straight[\s-]?in(?:\s+\w+)*\s+final", PatternPhase.STRAIGHT_IN_FINAL),
    (r"short\s+final", PatternPhase.SHORT_FINAL),
    (r"go(?:ing)?[\s-]?around", PatternPhase.GO_AROUND),
    (r"clear\s+of\s+(?:the\s+)?runway", PatternPhase.CLEAR_OF_RUNWAY),
    (r"taking\s+(?:the\s+)?runway|on\s+the\s+runway|back[\s-]?taxi|holding\s+on\s+runway",
     PatternPhase.ON_RUNWAY),
    (r"crosswind", PatternPhase.CROSSWIND),
    (r"downwind", PatternPhase.DOWNWIND),
    (r"\bbase\b", PatternPhase.BASE),
    (r"departing|departure", PatternPhase.DEPARTURE),
    (r"final", PatternPhase.FINAL),
]

_INTENTIONS: list[tuple[str, str]] = [
    (r"full\s+stop", "full_stop"),
    (r"touch\s+and\s+go", "touch_and_go"),
    (r"go(?:ing)?[\s-]?around", "go_around"),
    (r"departing|departure", "departure"),
]

_NORDO_RE = re.compile(r"\bno\s+radio\b|\bnordo\b", re.IGNORECASE)


def _extract_callsign(text: str) -> tuple[str | None, str]:
    """Find a leading phonetic tail number; returns (callsign, remainder)."""
    tokens = re.split(r"[,\s]+", text.strip())
    best = None
    for start, tok in enumerate(tokens):
        if tok.lower() != "november":
            continue
        chars = ["N"]
        end = start + 1
        while end < len(tokens) and len(chars) < 6:
            key = tokens[end].lower().strip(".,")
            if key not in _WORD_TO_CHAR:
                break
            chars.append(_WORD_TO_CHAR[key])
            end += 1
        if len(chars) >= 2:
            best = (start, end, "".join(chars))
            break
    if best is None:
        return None, text
    start, end, callsign = best
    if not N_NUMBER_RE.match(callsign):
        return None, text
    remainder = " ".join(tokens[:start] + tokens[end:])
    return callsign, remainder


def _runway_number(words: str) -> str:
    digits = []
    for w in re.split(r"[\s-]+", words.strip()):
        key = w.lower()
        if key in _WORD_TO_CHAR and _WORD_TO_CHAR[key].isdigit():
            digits.append(_WORD_TO_CHAR[key])
    return "".join(digits).lstrip("0") or "0"


def parse_radio_call(utterance: str) -> RadioCall:
    """Decompose a CTAF self-announcement.

    Calls with no recognizable phonetic callsign come back unattributed
    (callsign None) rather than failing: third-party mentions of NORDO
    traffic look exactly like that.
    """
    raw = utterance
    body = _FRAME_HEAD_RE.sub("", utterance)
    body = _FRAME_TAIL_RE.sub("", body)
    callsign, rest = _extract_callsign(body)

    phase = None
    position_text = rest.strip(" ,.")
    for pattern, ph in _PHASE_PATTERNS:
        if re.search(pattern, rest, re.IGNORECASE):
            phase = ph
            break

    runway = None
    m = _RUNWAY_RE.search(rest)
    if m:
        runway = _runway_number(m.group(1))

    intention = "other"
    intention_text = ""
    for pattern, name in _INTENTIONS:
        m = re.search(pattern, rest, re.IGNORECASE)
        if m:
            intention = name
            intention_text = m.group(0)
            break

    return RadioCall(
        callsign=callsign,
        phase=phase,
        position_text=position_text,
        runway=runway,
        intention=intention,
        intention_text=intention_text,
        raw_text=raw,
        mentions_nordo=bool(_NORDO_RE.search(utterance)),
    )
