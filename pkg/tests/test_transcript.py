import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctafbench.airspace import PatternPhase
from ctafbench.transcript import (
    RadioCall,
    SrtCue,
    SrtParseError,
    Transcript,
    emit_srt,
    nato_decode,
    nato_spell,
    parse_radio_call,
    parse_srt,
    validate_timing,
)

S003_CALL = (
    "Half Moon Bay traffic, November Niner One Zero Yankee Zulu, two-mile "
    "straight-in RNAV final runway three zero, full stop, Half Moon Bay"
)


class TestSrtParse:
    def test_empty(self):
        assert parse_srt("") == Transcript()
        assert parse_srt("   \n\n") == Transcript()

    def test_single_block(self):
        t = parse_srt("1\n00:00:00,000 --> 00:00:04,000\ntraffic call\n")
        assert len(t.cues) == 1
        assert t.cues[0].end_ms - t.cues[0].start_ms == 4000

    def test_bad_timestamp_names_block(self):
        with pytest.raises(SrtParseError) as exc:
            parse_srt("1\n00:00:00.000 -> bad\nx\n")
        assert exc.value.block == 1

    def test_non_monotone_index(self):
        text = ("1\n00:00:00,000 --> 00:00:04,000\na\n\n"
                "1\n00:00:08,000 --> 00:00:12,000\nb\n")
        with pytest.raises(SrtParseError) as exc:
            parse_srt(text)
        assert exc.value.block == 2

    def test_overlapping_cues_rejected(self):
        text = ("1\n00:00:00,000 --> 00:00:04,000\na\n\n"
                "2\n00:00:03,000 --> 00:00:08,000\nb\n")
        with pytest.raises(SrtParseError):
            parse_srt(text)


cue_texts = st.text(
    alphabet=st.characters(whitelist_categories=["L", "N", "P", "Z"],
                           blacklist_characters="\n\r"),
    min_size=1, max_size=60,
).map(lambda s: " ".join(s.split())).filter(
    lambda s: s and not s.isdigit() and "-->" not in s
)


@st.composite
def transcripts(draw):
    n = draw(st.integers(min_value=0, max_value=12))
    cues = []
    t = 0
    index = 0
    for _ in range(n):
        index += draw(st.integers(min_value=1, max_value=3))
        start = t + draw(st.integers(min_value=0, max_value=9000))
        end = start + draw(st.integers(min_value=100, max_value=8000))
        cues.append(SrtCue(index=index, start_ms=start, end_ms=end,
                           text=draw(cue_texts)))
        t = end
    return Transcript(cues=tuple(cues))


class TestSrtRoundTrip:
    @given(transcripts())
    @settings(max_examples=500, deadline=None)
    def test_round_trip(self, t):
        assert parse_srt(emit_srt(t)) == t

    def test_dataset_round_trip(self, small_dataset):
        for s in small_dataset.scenarios:
            t = parse_srt(s.transcript_srt)
            assert emit_srt(t) == s.transcript_srt


class TestValidateTiming:
    def _cue(self, idx, start_s, dur_s, text="call"):
        return SrtCue(index=idx, start_ms=round(start_s * 1000),
                      end_ms=round((start_s + dur_s) * 1000), text=text)

    def test_empty_ok(self):
        assert validate_timing(Transcript()) == []

    def test_single_good_cue(self):
        assert validate_timing(Transcript((self._cue(1, 0, 4),))) == []

    def test_utterance_too_short_and_too_long(self):
        bad = Transcript((self._cue(1, 0, 2),))
        kinds = {v.kind for v in validate_timing(bad)}
        assert "utterance_duration" in kinds
        bad = Transcript((self._cue(1, 0, 7),))
        assert any(v.kind == "utterance_duration" for v in validate_timing(bad))

    def test_gap_out_of_band(self):
        t = Transcript((self._cue(1, 0, 4), self._cue(2, 5, 4)))
        assert any(v.kind == "gap" for v in validate_timing(t))
        t = Transcript((self._cue(1, 0, 4), self._cue(2, 14, 4)))
        assert any(v.kind == "gap" for v in validate_timing(t))

    def test_eleven_cues_flagged(self):
        cues = tuple(self._cue(i + 1, i * 8.0, 4) for i in range(11))
        assert any(v.kind == "max_lines" for v in validate_timing(Transcript(cues)))

    def test_ninety_second_cap(self):
        t = Transcript((self._cue(1, 0, 4), self._cue(2, 91, 4)))
        assert any(v.kind == "total_duration" for v in validate_timing(t))

    def test_order_independent_report(self):
        t = Transcript((self._cue(1, 0, 2), self._cue(2, 12, 7)))
        kinds = sorted(v.kind for v in validate_timing(t))
        assert kinds == ["gap", "utterance_duration", "utterance_duration"]


class TestRadioCalls:
    def test_s003_straight_in_call(self):
        call = parse_radio_call(S003_CALL)
        assert call.callsign == "N910YZ"
        assert call.phase is PatternPhase.STRAIGHT_IN_FINAL
        assert call.runway == "30"
        assert call.intention == "full_stop"

    def test_go_around_without_callsign(self):
        call = parse_radio_call("going around runway three zero, traffic conflict on final")
        assert call.callsign is None
        assert call.intention == "go_around"
        assert call.phase is PatternPhase.GO_AROUND

    def test_third_party_nordo_mention(self):
        call = parse_radio_call("Skyhawk somewhere on downwind, no radio")
        assert call.callsign is None
        assert call.phase is PatternPhase.DOWNWIND
        assert call.mentions_nordo

    def test_short_final_beats_final(self):
        call = parse_radio_call(
            "Half Moon Bay traffic, November One Alpha, short final runway three zero, "
            "touch and go, Half Moon Bay")
        assert call.phase is PatternPhase.SHORT_FINAL
        assert call.intention == "touch_and_go"

    def test_left_downwind_call(self):
        call = parse_radio_call(
            "Half Moon Bay traffic, November Two Bravo Charlie, left downwind runway "
            "three zero, full stop, Half Moon Bay")
        assert call.callsign == "N2BC"
        assert call.phase is PatternPhase.DOWNWIND


VALID_CHARS = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ"


class TestNato:
    def test_s003_spelling(self):
        assert nato_spell("N910YZ") == "November Niner One Zero Yankee Zulu"

    def test_short(self):
        assert nato_spell("N1A") == "November One Alpha"

    def test_invalid_rejected(self):
        with pytest.raises(ValueError):
            nato_spell("910YZ")

    @given(st.text(alphabet=VALID_CHARS, min_size=1, max_size=5))
    @settings(max_examples=1000, deadline=None)
    def test_round_trip(self, suffix):
        callsign = "N" + suffix
        assert nato_decode(nato_spell(callsign)) == callsign
