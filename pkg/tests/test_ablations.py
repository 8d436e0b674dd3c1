import sys

import numpy as np
import pytest

from ctafbench.ablations import (
    AblationConfigError,
    AsrSwapPlan,
    MaskSpec,
    MaskingPlan,
    NoisePlan,
    NoiseSpec,
    UTTERANCE_PLACEHOLDER,
    WORD_MASK_TOKEN,
    inject_noise,
    mask_utterances,
    mask_words,
    read_wav,
    run_ablation,
    write_wav,
)
from ctafbench.transcript import SrtCue, Transcript, parse_srt

from conftest import no_sleep


def make_transcript(texts, start=0, dur=4000, gap=4000):
    cues = []
    t = start
    for i, text in enumerate(texts):
        cues.append(SrtCue(index=i + 1, start_ms=t, end_ms=t + dur, text=text))
        t += dur + gap
    return Transcript(cues=tuple(cues))


class TestMaskWords:
    def test_rate_zero_identity(self):
        t = make_transcript(["alpha bravo charlie", "delta echo"])
        assert mask_words(t, MaskSpec("word", 0.0, seed=1)) == t

    def test_exact_count_ten_words_forty_percent(self):
        t = make_transcript(["one two three four five", "six seven eight nine ten"])
        masked = mask_words(t, MaskSpec("word", 0.40, seed=3))
        n_masked = sum(c.text.split().count(WORD_MASK_TOKEN) for c in masked.cues)
        assert n_masked == 4

    def test_timestamps_and_counts_unchanged(self):
        t = make_transcript(["a b c d", "e f g", "h i"])
        masked = mask_words(t, MaskSpec("word", 0.6, seed=9))
        assert len(masked.cues) == len(t.cues)
        for before, after in zip(t.cues, masked.cues):
            assert (before.index, before.start_ms, before.end_ms) == \
                (after.index, after.start_ms, after.end_ms)
            assert len(before.text.split()) == len(after.text.split())

    def test_seeded_determinism(self):
        t = make_transcript([" ".join(f"w{i}" for i in range(30))])
        a = mask_words(t, MaskSpec("word", 0.5, seed=42))
        b = mask_words(t, MaskSpec("word", 0.5, seed=42))
        assert a == b
        # 30-choose-15 masks: different seeds collide with odds ~1/1.5e8
        c = mask_words(t, MaskSpec("word", 0.5, seed=43))
        assert a != c

    def test_empty_identity(self):
        empty = Transcript()
        assert mask_words(empty, MaskSpec("word", 0.4, seed=1)) == empty

    def test_scheme_enforced(self):
        with pytest.raises(ValueError):
            mask_words(make_transcript(["a"]), MaskSpec("utterance", 0.4))


class TestMaskUtterances:
    def test_exact_count_ten_cues_twenty_percent(self):
        t = make_transcript([f"call number {i}" for i in range(10)])
        masked = mask_utterances(t, MaskSpec("utterance", 0.20, seed=5))
        n_placeholder = sum(1 for c in masked.cues
                            if c.text == UTTERANCE_PLACEHOLDER)
        assert n_placeholder == 2

    def test_rate_one_masks_all_keeps_count(self):
        t = make_transcript(["a", "b", "c"])
        masked = mask_utterances(t, MaskSpec("utterance", 1.0, seed=5))
        assert len(masked.cues) == 3
        assert all(c.text == UTTERANCE_PLACEHOLDER for c in masked.cues)

    def test_timing_preserved(self):
        t = make_transcript(["one", "two", "three", "four"])
        masked = mask_utterances(t, MaskSpec("utterance", 0.5, seed=2))
        assert [(c.index, c.start_ms, c.end_ms) for c in masked.cues] == \
            [(c.index, c.start_ms, c.end_ms) for c in t.cues]

    def test_seeded_determinism(self):
        t = make_transcript([f"c{i}" for i in range(10)])
        spec = MaskSpec("utterance", 0.4, seed=11)
        assert mask_utterances(t, spec) == mask_utterances(t, spec)


def tone(seconds=5.0, rate=16000, freq=440.0, amplitude=0.3):
    t = np.arange(int(seconds * rate)) / rate
    return (amplitude * 32767 * np.sin(2 * np.pi * freq * t)).astype(np.int16)


class TestInjectNoise:
    def test_nsr_zero_bit_identical(self):
        x = tone()
        y = inject_noise(x, NoiseSpec(nsr=0.0, seed=1))
        assert np.array_equal(x, y)
        assert y.dtype == np.int16

    def test_quarter_nsr_rms_contract(self):
        x = tone()
        y = inject_noise(x, NoiseSpec(nsr=0.25, seed=7))
        noise = y.astype(np.float64) - x.astype(np.float64)
        measured = np.sqrt(np.mean(noise**2)) / np.sqrt(np.mean(x.astype(np.float64)**2))
        assert measured == pytest.approx(0.25, rel=0.01)

    def test_silent_input_rejected(self):
        with pytest.raises(ValueError):
            inject_noise(np.zeros(1000, dtype=np.int16), NoiseSpec(nsr=0.25, seed=1))

    def test_seeded_determinism(self):
        x = tone()
        a = inject_noise(x, NoiseSpec(nsr=0.5, seed=3))
        b = inject_noise(x, NoiseSpec(nsr=0.5, seed=3))
        assert np.array_equal(a, b)
        c = inject_noise(x, NoiseSpec(nsr=0.5, seed=4))
        assert not np.array_equal(a, c)

    def test_float_input_supported(self):
        x = 0.2 * np.sin(np.linspace(0, 100, 8000))
        y = inject_noise(x, NoiseSpec(nsr=0.1, seed=5))
        noise = y - x
        assert np.sqrt(np.mean(noise**2)) / np.sqrt(np.mean(x**2)) == \
            pytest.approx(0.1, rel=0.01)


class TestWav:
    def test_round_trip(self, tmp_path):
        x = tone(seconds=0.5)
        path = tmp_path / "t.wav"
        write_wav(path, x, 16000)
        y, rate = read_wav(path)
        assert rate == 16000
        assert np.array_equal(x, y)


class TestRunAblation:
    def test_masking_plan_condition_groups(self, small_dataset, oracle_endpoint,
                                           oracle_transport, tmp_path):
        plan = MaskingPlan(scheme="word", rates=(0.10, 0.40), framing="binary")
        records = run_ablation(
            small_dataset, [oracle_endpoint], plan,
            tmp_path / "abl.jsonl", transports={"oracle": oracle_transport},
            sleep=no_sleep)
        variants = {r.condition.variant for r in records}
        assert variants == {"mask_word@0.10", "mask_word@0.40"}
        n_test = len(small_dataset.test_split)
        assert len(records) == 2 * n_test

    def test_noise_plan_requires_transcriber(self, small_dataset, oracle_endpoint,
                                             tmp_path):
        with pytest.raises(AblationConfigError):
            run_ablation(small_dataset, [oracle_endpoint],
                         NoisePlan(transcriber_cmd="", audio_dir="x"),
                         tmp_path / "abl.jsonl")

    def test_noise_plan_with_stub_transcriber(self, small_dataset, oracle_endpoint,
                                              oracle_transport, tmp_path):
        audio_dir = tmp_path / "audio"
        audio_dir.mkdir()
        for s in small_dataset.test_split:
            write_wav(audio_dir / f"{s.id}.wav", tone(seconds=0.2), 16000)
        # Stand-in transcriber: emits a fixed single-cue SRT on stdout.
        stub = tmp_path / "stub_transcriber.py"
        stub.write_text(
            "import sys\n"
            "print('1')\n"
            "print('00:00:00,000 --> 00:00:04,000')\n"
            "print('Half Moon Bay traffic, stub call, Half Moon Bay.')\n"
        )
        plan = NoisePlan(nsrs=(0.25,), audio_dir=str(audio_dir),
                         transcriber_cmd=f"{sys.executable} {stub} {{audio}}",
                         framing="binary")
        records = run_ablation(
            small_dataset, [oracle_endpoint], plan, tmp_path / "abl.jsonl",
            transports={"oracle": oracle_transport}, sleep=no_sleep)
        assert {r.condition.variant for r in records} == {"noise@0.25"}
        assert all(r.condition.strategy == "ZS" for r in records)

    def test_asr_swap_three_sets(self, small_dataset, oracle_endpoint,
                                 oracle_transport, tmp_path):
        dirs = []
        for size in ("base", "medium", "large"):
            d = tmp_path / f"asr_{size}"
            d.mkdir()
            for s in small_dataset.test_split:
                (d / f"{s.id}.srt").write_text(s.transcript_srt, encoding="utf-8")
            dirs.append(str(d))
        plan = AsrSwapPlan(transcript_dirs=tuple(dirs), framing="binary")
        records = run_ablation(
            small_dataset, [oracle_endpoint], plan, tmp_path / "abl.jsonl",
            transports={"oracle": oracle_transport}, sleep=no_sleep)
        assert {r.condition.variant for r in records} == {
            "asr_asr_base", "asr_asr_medium", "asr_asr_large"}

    def test_masking_preserves_structure_on_dataset(self, small_dataset):
        for s in small_dataset.test_split:
            t = parse_srt(s.transcript_srt)
            for rate in (0.10, 0.20, 0.40, 0.60, 0.80):
                masked = mask_words(t, MaskSpec("word", rate, seed=1))
                assert len(masked.cues) == len(t.cues)
                expected = int(rate * sum(len(c.text.split()) for c in t.cues) + 0.5)
                got = sum(c.text.split().count(WORD_MASK_TOKEN) for c in masked.cues)
                assert got == expected
