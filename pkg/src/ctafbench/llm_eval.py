"""Chat-endpoint evaluation harness: prompt assembly for the strategy/protocol
matrix, transport with retry and backoff, the direct and two-turn reasoning
protocols, verdict extraction, and the resumable matrix runner.

Endpoints are described declaratively; the wire adapter is chosen by `kind`.
Built-in mock kinds (an oracle that answers from gold labels at a configured
error rate, and a fixture player) make the whole pipeline runnable offline.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import prompts
from .airspace import Scenario
from .metrics import Condition, EvalRecord, classes_for
from .scenario_gen import Dataset


class TransportError(RuntimeError):
    """Transient failure; the request may be retried."""


class EndpointError(RuntimeError):
    """Permanent failure (bad request/auth); retrying will not help."""


class PromptAssemblyError(ValueError):
    pass


class VerdictParseError(ValueError):
    pass


@dataclass(frozen=True)
class ModelEndpoint:
    name: str
    kind: str = "openai-chat"  # openai-chat | mock-oracle | mock-fixture
    base_url: str = ""
    auth_env: str = ""
    model: str = ""
    supports_logprobs: bool = False
    max_parallel: int = 2
    timeout_s: float = 60.0
    options: dict = field(default_factory=dict)


@dataclass
class Completion:
    text: str
    latency_s: float
    label_probs: dict[str, float] | None = None  # per-class probability mass
    attempts: int = 1


@dataclass
class Verdict:
    label: str | None
    confidence: float
    reasoning: str
    score_danger: float
    score_source: str
    latency_s: float
    raw_response: str
    parse_failure: bool = False


# Evaluation-side sampling: deterministic decoding, with headroom for the
# reasoning turn.
EVAL_TEMPERATURE = 0.0
DIRECT_MAX_TOKENS = 512
COT_MAX_TOKENS = 1024

RETRY_MAX_ATTEMPTS = 5
RETRY_BASE_DELAY_S = 1.0
RETRY_FACTOR = 2.0

Transport = Callable[[ModelEndpoint, list[dict], dict, dict], Completion]


# ---------------------------------------------------------------------------
# Prompt assembly
# ---------------------------------------------------------------------------

STRATEGY_SHOTS = {"ZS": 0, "OS": 1, "FS": 2}


def render_scenario_message(s: Scenario) -> str:
    """The textual inputs shown to the classifier: METAR (raw + decoded) and
    the SRT transcript."""
    return (
        f"METAR: {s.metar_raw}\n"
        f"Decoded: {s.metar_decoded}\n\n"
        f"CTAF TRANSCRIPT (SRT):\n{s.transcript_srt}"
    )


def system_prompt_for(framing: str) -> str:
    if framing == "binary":
        return prompts.BINARY_SYSTEM_PROMPT
    if framing == "three_class":
        return prompts.THREE_CLASS_SYSTEM_PROMPT
    raise ValueError(f"unknown framing: {framing}")


def gold_label(s: Scenario, framing: str) -> str:
    return s.label_binary.value if framing == "binary" else s.label3.value


def _exemplar_verdict(s: Scenario, framing: str) -> str:
    reasoning = s.advisory_text.split(". ")[0].rstrip(".") + "."
    return json.dumps(
        {"label": gold_label(s, framing), "confidence": 1.0, "reasoning": reasoning}
    )


def select_exemplars(strategy: str, icl_pool: list[Scenario] | tuple[Scenario, ...]
                     ) -> list[Scenario]:
    """Exemplars come only from the held-out pool: one per 3-way class for
    one-shot, two per class for few-shot, in class order then id order."""
    shots = STRATEGY_SHOTS[strategy]
    if shots == 0:
        return []
    chosen = []
    for cls in ("nominal", "warning", "hazard"):
        members = sorted((s for s in icl_pool if s.label3.value == cls),
                         key=lambda s: s.id)
        if len(members) < shots:
            raise PromptAssemblyError(f"ICL pool has too few {cls} exemplars")
        chosen.extend(members[:shots])
    return chosen


def assemble_prompt(
    framing: str,
    strategy: str,
    scenario: Scenario,
    icl_pool: list[Scenario] | tuple[Scenario, ...] = (),
    attach_image_b64: str | None = None,
) -> list[dict]:
    """Build the chat message list for one evaluation call."""
    exemplars = select_exemplars(strategy, icl_pool)
    for ex in exemplars:
        if ex.id == scenario.id:
            raise PromptAssemblyError(f"exemplar {ex.id} is the evaluation target")
    messages: list[dict] = [{"role": "system", "content": system_prompt_for(framing)}]
    for ex in exemplars:
        messages.append({"role": "user", "content": render_scenario_message(ex)})
        messages.append({"role": "assistant", "content": _exemplar_verdict(ex, framing)})
    content: object = render_scenario_message(scenario)
    if attach_image_b64 is not None:
        content = [
            {"type": "text", "text": content},
            {"type": "image_url",
             "image_url": {"url": f"data:image/png;base64,{attach_image_b64}"}},
        ]
    messages.append({"role": "user", "content": content})
    return messages


# ---------------------------------------------------------------------------
# Transports
# ---------------------------------------------------------------------------


def openai_chat_transport(endpoint: ModelEndpoint, messages: list[dict],
                          opts: dict, context: dict) -> Completion:
    """OpenAI-compatible chat-completions adapter."""
    import requests

    headers = {"Content-Type": "application/json"}
    if endpoint.auth_env:
        key = os.environ.get(endpoint.auth_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
    body = {
        "model": endpoint.model or endpoint.name,
        "messages": messages,
        "temperature": opts.get("temperature", EVAL_TEMPERATURE),
        "max_tokens": opts.get("max_tokens", DIRECT_MAX_TOKENS),
    }
    if opts.get("want_logprobs") and endpoint.supports_logprobs:
        body["logprobs"] = True
        body["top_logprobs"] = 10
    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    t0 = time.perf_counter()
    try:
        resp = requests.post(url, json=body, headers=headers,
                             timeout=endpoint.timeout_s)
    except requests.RequestException as ex:
        raise TransportError(f"{endpoint.name}: {ex}") from ex
    latency = time.perf_counter() - t0
    if resp.status_code == 429 or resp.status_code >= 500:
        raise TransportError(f"{endpoint.name}: HTTP {resp.status_code}")
    if resp.status_code >= 400:
        raise EndpointError(f"{endpoint.name}: HTTP {resp.status_code}: {resp.text[:200]}")
    payload = resp.json()
    choice = payload["choices"][0]
    text = choice["message"]["content"] or ""
    label_probs = None
    if opts.get("want_logprobs") and endpoint.supports_logprobs:
        label_probs = _label_probs_from_logprobs(choice, opts.get("classes", ()))
    return Completion(text=text, latency_s=latency, label_probs=label_probs)


def _label_probs_from_logprobs(choice: dict, classes: tuple[str, ...]
                               ) -> dict[str, float] | None:
    """Best-effort recovery of per-class probability mass from token logprobs:
    find the token opening the label value and read its alternatives."""
    import math
    try:
        content = choice["logprobs"]["content"]
    except (KeyError, TypeError):
        return None
    if not content:
        return None
    for tok in content:
        text = tok.get("token", "").strip().strip('"').lower()
        if not text:
            continue
        if any(c.startswith(text) or text.startswith(c) for c in classes if len(text) >= 3):
            masses: dict[str, float] = {}
            for alt in tok.get("top_logprobs", []):
                alt_text = alt.get("token", "").strip().strip('"').lower()
                for c in classes:
                    if len(alt_text) >= 3 and (c.startswith(alt_text) or alt_text.startswith(c)):
                        masses[c] = masses.get(c, 0.0) + math.exp(alt["logprob"])
                        break
            if masses:
                return masses
    return None


def _mock_latency(context: dict, salt: str) -> float:
    h = int(hashlib.sha256(
        f"{context.get('scenario_id')}:{context.get('framing')}:"
        f"{context.get('strategy')}:{context.get('protocol')}:{salt}".encode()
    ).hexdigest(), 16)
    return 0.2 + (h % 1000) / 2000.0


def _is_cot_elicit_turn(messages: list[dict]) -> bool:
    last = messages[-1]
    return (last["role"] == "user" and isinstance(last["content"], str)
            and last["content"].endswith(prompts.COT_ELICIT_SUFFIX))


def make_oracle_transport(gold: dict[str, dict[str, str]],
                          error_rate: float = 0.0,
                          seed: int = 0) -> Transport:
    """Mock transport answering from gold labels, corrupted deterministically
    at `error_rate`.  Two-turn aware: a reasoning elicitation gets prose, the
    extraction turn gets the JSON."""

    def transport(endpoint: ModelEndpoint, messages: list[dict], opts: dict,
                  context: dict) -> Completion:
        sid = context["scenario_id"]
        framing = context["framing"]
        classes = classes_for(framing)
        answer = gold[sid][framing]
        h = int(hashlib.sha256(
            f"{seed}:{sid}:{framing}:{context['strategy']}:{context['protocol']}".encode()
        ).hexdigest(), 16)
        if error_rate > 0 and (h % 10_000) / 10_000.0 < error_rate:
            wrong = [c for c in classes if c != answer]
            answer = wrong[h % len(wrong)]
        if _is_cot_elicit_turn(messages):
            return Completion(
                text=(f"Step by step: reviewing the calls and weather, the "
                      f"situation appears {answer}."),
                latency_s=_mock_latency(context, "turn1"),
            )
        confidence = 0.85 + (h % 100) / 1000.0
        body = json.dumps({
            "label": answer,
            "confidence": round(confidence, 3),
            "reasoning": f"Oracle assessment of scenario {sid}.",
        })
        probs = None
        if endpoint.supports_logprobs:
            rest = (1.0 - confidence) / max(len(classes) - 1, 1)
            probs = {c: (confidence if c == answer else rest) for c in classes}
        return Completion(text=body, latency_s=_mock_latency(context, "turn2"),
                          label_probs=probs)

    return transport


def make_fixture_transport(table: dict[str, dict]) -> Transport:
    """Mock transport replaying canned predictions keyed by
    "scenario_id/framing" (optionally "/strategy/protocol")."""

    def transport(endpoint: ModelEndpoint, messages: list[dict], opts: dict,
                  context: dict) -> Completion:
        keys = [
            f"{context['scenario_id']}/{context['framing']}/{context['strategy']}/{context['protocol']}",
            f"{context['scenario_id']}/{context['framing']}",
        ]
        row = None
        for k in keys:
            if k in table:
                row = table[k]
                break
        if row is None:
            raise EndpointError(f"fixture has no prediction for {keys[-1]}")
        if _is_cot_elicit_turn(messages):
            return Completion(text="Reasoning from the fixture.",
                              latency_s=row.get("latency_s", 0.3))
        body = json.dumps({
            "label": row["label"],
            "confidence": row.get("confidence", 0.9),
            "reasoning": row.get("reasoning", "fixture"),
        })
        return Completion(text=body, latency_s=row.get("latency_s", 0.3))

    return transport


def load_fixture_table(path: Path | str) -> dict[str, dict]:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def default_transport(endpoint: ModelEndpoint) -> Transport:
    if endpoint.kind == "openai-chat":
        return openai_chat_transport
    if endpoint.kind == "mock-fixture":
        return make_fixture_transport(load_fixture_table(endpoint.options["fixture_path"]))
    raise EndpointError(
        f"endpoint {endpoint.name}: kind {endpoint.kind!r} needs an explicit transport"
    )


# ---------------------------------------------------------------------------
# Completion with retry
# ---------------------------------------------------------------------------


def complete(
    endpoint: ModelEndpoint,
    messages: list[dict],
    opts: dict | None = None,
    *,
    transport: Transport | None = None,
    context: dict | None = None,
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
) -> Completion:
    """Issue one completion, retrying transient failures with jittered
    exponential backoff (base 1 s, factor 2, at most 5 attempts)."""
    transport = transport or default_transport(endpoint)
    opts = opts or {}
    context = context or {}
    rng = rng or random.Random()
    delay = RETRY_BASE_DELAY_S
    last: TransportError | None = None
    for attempt in range(1, RETRY_MAX_ATTEMPTS + 1):
        try:
            completion = transport(endpoint, messages, opts, context)
            completion.attempts = attempt
            return completion
        except TransportError as ex:
            last = ex
            if attempt == RETRY_MAX_ATTEMPTS:
                break
            sleep(delay * (1.0 + rng.uniform(0.0, 0.25)))
            delay *= RETRY_FACTOR
    raise TransportError(
        f"{endpoint.name}: gave up after {RETRY_MAX_ATTEMPTS} attempts: {last}"
    )


# ---------------------------------------------------------------------------
# Verdict extraction and scoring
# ---------------------------------------------------------------------------


def _balanced_objects(text: str):
    depth = 0
    start = None
    in_string = False
    escape = False
    for i, ch in enumerate(text):
        if in_string:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}":
            if depth > 0:
                depth -= 1
                if depth == 0 and start is not None:
                    yield text[start:i + 1]
                    start = None


def extract_verdict(text: str, framing: str) -> dict:
    """Pull {label, confidence, reasoning} out of a completion, tolerating
    surrounding prose; the first balanced JSON object wins."""
    classes = classes_for(framing)
    candidate = None
    for obj_text in _balanced_objects(text):
        try:
            candidate = json.loads(obj_text)
        except json.JSONDecodeError:
            continue
        break
    if not isinstance(candidate, dict):
        raise VerdictParseError("no JSON object found in response")
    missing = {"label", "confidence", "reasoning"} - set(candidate)
    if missing:
        raise VerdictParseError(f"verdict missing fields: {sorted(missing)}")
    label = str(candidate["label"]).strip().lower()
    if label not in classes:
        raise VerdictParseError(f"unknown label {candidate['label']!r}")
    try:
        confidence = float(candidate["confidence"])
    except (TypeError, ValueError):
        raise VerdictParseError(f"non-numeric confidence {candidate['confidence']!r}")
    if not 0.0 <= confidence <= 1.0:
        raise VerdictParseError(f"confidence out of range: {confidence}")
    return {"label": label, "confidence": confidence,
            "reasoning": str(candidate["reasoning"])}


def capture_score(label: str, confidence: float, completion: Completion,
                  framing: str, endpoint: ModelEndpoint) -> tuple[float, str]:
    """Danger-side score: renormalized logprob mass when the endpoint exposes
    it, otherwise the confidence-based fallback."""
    classes = classes_for(framing)
    if endpoint.supports_logprobs and completion.label_probs:
        total = sum(completion.label_probs.get(c, 0.0) for c in classes)
        if total > 0:
            danger = sum(completion.label_probs.get(c, 0.0)
                         for c in classes if c != "nominal")
            return (danger / total, "logprob")
    score = confidence if label != "nominal" else 1.0 - confidence
    return (min(max(score, 0.0), 1.0), "confidence_fallback")


# ---------------------------------------------------------------------------
# Protocols
# ---------------------------------------------------------------------------


def run_protocol(
    endpoint: ModelEndpoint,
    framing: str,
    strategy: str,
    protocol: str,
    scenario: Scenario,
    icl_pool: list[Scenario] | tuple[Scenario, ...] = (),
    *,
    transport: Transport | None = None,
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
    attach_image_b64: str | None = None,
) -> Verdict:
    """Run the direct (one-turn) or chain-of-thought (two-turn) protocol for
    one scenario; latency sums every turn issued, including a repair turn."""
    messages = assemble_prompt(framing, strategy, scenario, icl_pool,
                               attach_image_b64=attach_image_b64)
    context = {
        "scenario_id": scenario.id,
        "framing": framing,
        "strategy": strategy,
        "protocol": protocol,
        "gold": gold_label(scenario, framing),
    }
    opts = {
        "temperature": EVAL_TEMPERATURE,
        "max_tokens": DIRECT_MAX_TOKENS,
        "want_logprobs": True,
        "classes": classes_for(framing),
    }
    total_latency = 0.0

    if protocol == "cot":
        elicit = [dict(m) for m in messages]
        if isinstance(elicit[-1]["content"], str):
            elicit[-1]["content"] = (
                elicit[-1]["content"] + "\n\n" + prompts.COT_ELICIT_SUFFIX
            )
        else:
            elicit[-1]["content"] = elicit[-1]["content"] + [
                {"type": "text", "text": prompts.COT_ELICIT_SUFFIX}
            ]
        turn1 = complete(endpoint, elicit,
                         {**opts, "max_tokens": COT_MAX_TOKENS, "want_logprobs": False},
                         transport=transport, context={**context, "turn": 1},
                         sleep=sleep, rng=rng)
        total_latency += turn1.latency_s
        messages = elicit + [
            {"role": "assistant", "content": turn1.text},
            {"role": "user", "content": prompts.COT_EXTRACT_MESSAGE},
        ]
    elif protocol != "direct":
        raise ValueError(f"unknown protocol: {protocol}")

    completion = complete(endpoint, messages, opts, transport=transport,
                          context={**context, "turn": 2}, sleep=sleep, rng=rng)
    total_latency += completion.latency_s

    try:
        verdict = extract_verdict(completion.text, framing)
    except VerdictParseError:
        repair = messages + [
            {"role": "assistant", "content": completion.text},
            {"role": "user", "content": prompts.REPAIR_MESSAGE},
        ]
        completion2 = complete(endpoint, repair, opts, transport=transport,
                               context={**context, "turn": 3}, sleep=sleep, rng=rng)
        total_latency += completion2.latency_s
        try:
            verdict = extract_verdict(completion2.text, framing)
            completion = completion2
        except VerdictParseError:
            return Verdict(
                label=None, confidence=0.0, reasoning="",
                score_danger=0.5, score_source="confidence_fallback",
                latency_s=total_latency,
                raw_response=completion.text + "\n---\n" + completion2.text,
                parse_failure=True,
            )

    score, source = capture_score(verdict["label"], verdict["confidence"],
                                  completion, framing, endpoint)
    return Verdict(
        label=verdict["label"],
        confidence=verdict["confidence"],
        reasoning=verdict["reasoning"],
        score_danger=score,
        score_source=source,
        latency_s=total_latency,
        raw_response=completion.text,
    )


def wrong_class(gold: str, framing: str) -> str:
    """Deterministic stand-in prediction for unparseable records: the class
    most in disagreement with the gold label."""
    if framing == "binary":
        return "danger" if gold == "nominal" else "nominal"
    return "hazard" if gold == "nominal" else "nominal"


def make_generation_client(
    endpoint: ModelEndpoint,
    *,
    transport: Transport | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> Callable[[str, str], str]:
    """Adapter for dataset-generation calls (transcripts/advisories): one
    system+user exchange at the generation sampling settings, with the usual
    retry behavior."""

    def generate(system_prompt: str, user_message: str) -> str:
        completion = complete(
            endpoint,
            [{"role": "system", "content": system_prompt},
             {"role": "user", "content": user_message}],
            {"temperature": prompts.GEN_TEMPERATURE,
             "max_tokens": prompts.GEN_MAX_TOKENS},
            transport=transport,
            context={"scenario_id": "", "framing": "", "strategy": "",
                     "protocol": "", "purpose": "generation"},
            sleep=sleep,
        )
        return completion.text

    return generate


# ---------------------------------------------------------------------------
# Matrix runner
# ---------------------------------------------------------------------------


def _record_key(r: EvalRecord) -> tuple:
    return (r.condition.key(), r.scenario_id)


def run_matrix(
    dataset: Dataset,
    endpoints: list[ModelEndpoint],
    framings: list[str],
    strategies: list[str] = ("ZS", "OS", "FS"),
    protocols: list[str] = ("direct", "cot"),
    results_path: Path | str = "records.jsonl",
    *,
    transports: dict[str, Transport] | None = None,
    sleep: Callable[[float], None] = time.sleep,
    scenarios: list[Scenario] | None = None,
    variant: str = "",
    progress: Callable[[str], None] | None = None,
) -> list[EvalRecord]:
    """Evaluate every (endpoint x strategy x protocol x framing) condition on
    the test split, appending records as they finish.

    The run is resumable: records already present in `results_path` are not
    re-issued.  On clean completion the file is rewritten in sorted order so
    equal runs produce identical bytes.
    """
    results_path = Path(results_path)
    icl_pool = dataset.icl_pool
    targets = list(scenarios) if scenarios is not None else list(dataset.test_split)
    for s in targets:
        if s.split != "test":
            raise PromptAssemblyError(f"{s.id} is not in the test split")

    existing: dict[tuple, EvalRecord] = {}
    if results_path.exists():
        from .metrics import read_records

        for r in read_records(results_path):
            existing[_record_key(r)] = r

    tasks = []
    for ep in endpoints:
        for framing in framings:
            for strategy in strategies:
                for protocol in protocols:
                    cond = Condition(model=ep.name, framing=framing,
                                     strategy=strategy, protocol=protocol,
                                     variant=variant)
                    for s in targets:
                        key = (cond.key(), s.id)
                        if key not in existing:
                            tasks.append((ep, cond, s))

    results_path.parent.mkdir(parents=True, exist_ok=True)
    write_lock = threading.Lock()
    semaphores = {ep.name: threading.BoundedSemaphore(ep.max_parallel)
                  for ep in endpoints}
    leakage_failures = 0

    def eval_one(ep: ModelEndpoint, cond: Condition, s: Scenario) -> EvalRecord:
        nonlocal leakage_failures
        gold = gold_label(s, cond.framing)
        exemplars = select_exemplars(cond.strategy, icl_pool)
        if any(ex.id == s.id for ex in exemplars):
            leakage_failures += 1
            raise PromptAssemblyError(f"ICL leakage for {s.id}")
        transport = (transports or {}).get(ep.name)
        try:
            verdict = run_protocol(ep, cond.framing, cond.strategy, cond.protocol,
                                   s, icl_pool, transport=transport, sleep=sleep)
        except (TransportError, EndpointError) as ex:
            return EvalRecord(
                scenario_id=s.id, condition=cond, gold=gold,
                pred=wrong_class(gold, cond.framing), confidence=0.0,
                score_danger=0.5, score_source="confidence_fallback",
                latency_s=0.0, parse_failure=False, error=str(ex),
            )
        pred = verdict.label if verdict.label else wrong_class(gold, cond.framing)
        return EvalRecord(
            scenario_id=s.id, condition=cond, gold=gold, pred=pred,
            confidence=verdict.confidence, score_danger=verdict.score_danger,
            score_source=verdict.score_source, latency_s=verdict.latency_s,
            parse_failure=verdict.parse_failure, error=None,
        )

    def worker(task) -> EvalRecord:
        ep, cond, s = task
        with semaphores[ep.name]:
            rec = eval_one(ep, cond, s)
        with write_lock:
            with open(results_path, "a", encoding="utf-8") as fh:
                fh.write(rec.to_json() + "\n")
        if progress:
            progress(f"{cond.key()} {s.id}")
        return rec

    records = list(existing.values())
    if tasks:
        max_workers = max(sum(ep.max_parallel for ep in endpoints), 1)
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = [pool.submit(worker, t) for t in tasks]
            for fut in as_completed(futures):
                records.append(fut.result())

    records.sort(key=_record_key)
    from .metrics import write_records

    write_records(records, results_path)
    if leakage_failures:
        raise PromptAssemblyError(f"{leakage_failures} ICL-leakage records")
    return records
