"""Robustness perturbations and their evaluation driver: word- and
utterance-level transcript masking at fixed rates, additive Gaussian audio
noise at fixed noise-to-signal ratios, and re-evaluation over the perturbed
inputs (with an external transcriber hook for the audio path).
"""

from __future__ import annotations

import random
import shlex
import subprocess
import tempfile
import wave
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .metrics import EvalRecord
from .scenario_gen import Dataset
from .transcript import Transcript, emit_srt, parse_srt

MASK_RATES = (0.10, 0.20, 0.40, 0.60, 0.80)
NOISE_NSRS = (0.05, 0.10, 0.25, 0.50, 0.75)

WORD_MASK_TOKEN = "[UNINTELLIGIBLE]"
UTTERANCE_PLACEHOLDER = "[TRANSMISSION GARBLED]"


@dataclass(frozen=True)
class MaskSpec:
    scheme: str  # "word" | "utterance"
    rate: float
    seed: int = 0
    mask_token: str = WORD_MASK_TOKEN
    placeholder_text: str = UTTERANCE_PLACEHOLDER

    def __post_init__(self):
        if self.scheme not in ("word", "utterance"):
            raise ValueError(f"unknown masking scheme: {self.scheme}")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"mask rate out of range: {self.rate}")


@dataclass(frozen=True)
class NoiseSpec:
    nsr: float
    seed: int = 0

    def __post_init__(self):
        if self.nsr < 0:
            raise ValueError("noise-to-signal ratio must be nonnegative")


def _exact_count(rate: float, n: int) -> int:
    # round-half-up so the masked fraction is reproducible on short transcripts
    return int(rate * n + 0.5)


def mask_words(t: Transcript, spec: MaskSpec) -> Transcript:
    """Replace exactly round(rate x word_count) words across the transcript
    with the mask token, sampled without replacement; timing untouched."""
    if spec.scheme != "word":
        raise ValueError("mask_words requires a word-scheme spec")
    words_per_cue = [c.text.split() for c in t.cues]
    total = sum(len(w) for w in words_per_cue)
    if total == 0:
        return t
    k = _exact_count(spec.rate, total)
    rng = random.Random(spec.seed)
    chosen = set(rng.sample(range(total), k))
    new_cues = []
    pos = 0
    for cue, words in zip(t.cues, words_per_cue):
        masked = [spec.mask_token if (pos + i) in chosen else w
                  for i, w in enumerate(words)]
        pos += len(words)
        new_cues.append(replace(cue, text=" ".join(masked)))
    return Transcript(cues=tuple(new_cues))


def mask_utterances(t: Transcript, spec: MaskSpec) -> Transcript:
    """Replace exactly round(rate x cue_count) whole calls with the
    placeholder; indices and timestamps preserved."""
    if spec.scheme != "utterance":
        raise ValueError("mask_utterances requires an utterance-scheme spec")
    n = len(t.cues)
    if n == 0:
        return t
    k = _exact_count(spec.rate, n)
    rng = random.Random(spec.seed)
    chosen = set(rng.sample(range(n), k))
    new_cues = tuple(
        replace(cue, text=spec.placeholder_text) if i in chosen else cue
        for i, cue in enumerate(t.cues)
    )
    return Transcript(cues=new_cues)


def apply_mask(t: Transcript, spec: MaskSpec) -> Transcript:
    return mask_words(t, spec) if spec.scheme == "word" else mask_utterances(t, spec)


# ---------------------------------------------------------------------------
# Audio noise
# ---------------------------------------------------------------------------

PCM16_MAX = 32767


def inject_noise(samples: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """Add seeded white Gaussian noise scaled so RMS(noise) = nsr x RMS(signal).

    int16 input is processed in float and re-quantized (with clipping to the
    sample range); nsr 0 returns the input bit-for-bit.
    """
    samples = np.asarray(samples)
    is_pcm16 = samples.dtype == np.int16
    x = samples.astype(np.float64)
    if is_pcm16:
        x = x / PCM16_MAX
    rms = float(np.sqrt(np.mean(x**2)))
    if rms == 0.0:
        raise ValueError("silent input: noise-to-signal ratio is undefined")
    if spec.nsr == 0.0:
        return samples.copy()
    rng = np.random.default_rng(spec.seed)
    noise = rng.standard_normal(x.shape)
    noise_rms = float(np.sqrt(np.mean(noise**2)))
    g = spec.nsr * rms / noise_rms
    y = x + g * noise
    if is_pcm16:
        y = np.clip(np.rint(y * PCM16_MAX), -PCM16_MAX - 1, PCM16_MAX)
        return y.astype(np.int16)
    return y


def read_wav(path: Path | str) -> tuple[np.ndarray, int]:
    """Read mono/stereo 16-bit PCM; returns (samples, sample_rate)."""
    with wave.open(str(path), "rb") as wav:
        if wav.getsampwidth() != 2:
            raise ValueError("only 16-bit PCM WAV is supported")
        rate = wav.getframerate()
        frames = wav.readframes(wav.getnframes())
        data = np.frombuffer(frames, dtype=np.int16)
        channels = wav.getnchannels()
        if channels > 1:
            data = data.reshape(-1, channels)
    return data, rate


def write_wav(path: Path | str, samples: np.ndarray, rate: int) -> None:
    samples = np.asarray(samples, dtype=np.int16)
    channels = 1 if samples.ndim == 1 else samples.shape[1]
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(channels)
        wav.setsampwidth(2)
        wav.setframerate(rate)
        wav.writeframes(samples.tobytes())


# ---------------------------------------------------------------------------
# Ablation plans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MaskingPlan:
    scheme: str
    rates: tuple[float, ...] = MASK_RATES
    strategy: str = "ZS"
    protocol: str = "direct"
    framing: str = "three_class"
    seed: int = 0


@dataclass(frozen=True)
class NoisePlan:
    nsrs: tuple[float, ...] = NOISE_NSRS
    transcriber_cmd: str = ""  # command template with {audio}; emits SRT on stdout
    audio_dir: str = ""  # per-scenario WAV files: <audio_dir>/<id>.wav
    framing: str = "three_class"
    seed: int = 0


@dataclass(frozen=True)
class AsrSwapPlan:
    transcript_dirs: tuple[str, ...] = ()  # each holds <id>.srt files
    strategy: str = "ZS"
    protocol: str = "direct"
    framing: str = "three_class"


class AblationConfigError(ValueError):
    pass


def run_external_transcriber(cmd_template: str, audio_path: Path) -> Transcript:
    cmd = [part.format(audio=str(audio_path))
           for part in shlex.split(cmd_template)]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise AblationConfigError(
            f"transcriber failed ({proc.returncode}): {proc.stderr[:200]}")
    return parse_srt(proc.stdout)


def _with_transcript(scenario, transcript: Transcript):
    return replace(scenario, transcript_srt=emit_srt(transcript))


def run_ablation(
    dataset: Dataset,
    endpoints: list,
    plan,
    results_path: Path | str,
    *,
    transports: dict | None = None,
    sleep: Callable[[float], None] | None = None,
) -> list[EvalRecord]:
    """Re-evaluate the test split under a perturbation plan.

    Masking: each rate becomes one condition group over masked transcripts.
    Noise: audio is corrupted at each NSR, pushed through the configured
    external transcriber, and evaluated zero-shot.  ASR swap: externally
    supplied transcript sets are evaluated verbatim.
    """
    from .llm_eval import run_matrix

    kwargs = {"transports": transports}
    if sleep is not None:
        kwargs["sleep"] = sleep
    # run_matrix returns the full contents of the shared results file, so the
    # last call per plan already carries every variant's records.
    records: list[EvalRecord] = []

    if isinstance(plan, MaskingPlan):
        for rate in plan.rates:
            spec = MaskSpec(scheme=plan.scheme, rate=rate, seed=plan.seed)
            perturbed = [
                _with_transcript(s, apply_mask(parse_srt(s.transcript_srt), spec))
                for s in dataset.test_split
            ]
            records = run_matrix(
                dataset, endpoints, [plan.framing], [plan.strategy], [plan.protocol],
                results_path, scenarios=perturbed,
                variant=f"mask_{plan.scheme}@{rate:.2f}", **kwargs,
            )
        return records

    if isinstance(plan, NoisePlan):
        if not plan.transcriber_cmd:
            raise AblationConfigError("noise ablation requires a transcriber command")
        if not plan.audio_dir:
            raise AblationConfigError("noise ablation requires an audio directory")
        audio_dir = Path(plan.audio_dir)
        for nsr in plan.nsrs:
            spec = NoiseSpec(nsr=nsr, seed=plan.seed)
            perturbed = []
            with tempfile.TemporaryDirectory() as tmp:
                for s in dataset.test_split:
                    wav_path = audio_dir / f"{s.id}.wav"
                    if not wav_path.exists():
                        raise AblationConfigError(f"missing audio for {s.id}: {wav_path}")
                    samples, rate = read_wav(wav_path)
                    noisy = inject_noise(samples, spec)
                    out_path = Path(tmp) / f"{s.id}.wav"
                    write_wav(out_path, noisy, rate)
                    t = run_external_transcriber(plan.transcriber_cmd, out_path)
                    perturbed.append(_with_transcript(s, t))
                records = run_matrix(
                    dataset, endpoints, [plan.framing], ["ZS"], ["direct"],
                    results_path, scenarios=perturbed,
                    variant=f"noise@{nsr:.2f}", **kwargs,
                )
        return records

    if isinstance(plan, AsrSwapPlan):
        if not plan.transcript_dirs:
            raise AblationConfigError("ASR swap requires at least one transcript set")
        for d in plan.transcript_dirs:
            root = Path(d)
            perturbed = []
            for s in dataset.test_split:
                srt_path = root / f"{s.id}.srt"
                if not srt_path.exists():
                    raise AblationConfigError(f"missing transcript for {s.id}: {srt_path}")
                perturbed.append(_with_transcript(
                    s, parse_srt(srt_path.read_text(encoding="utf-8"))))
            records = run_matrix(
                dataset, endpoints, [plan.framing], [plan.strategy], [plan.protocol],
                results_path, scenarios=perturbed,
                variant=f"asr_{root.name}", **kwargs,
            )
        return records

    raise AblationConfigError(f"unknown ablation plan: {plan!r}")
