"""Command-line harness: dataset generation, matrix evaluation, ablations,
and report rendering, driven by one TOML config file.

Subcommands: gen | eval | ablate | report.  Endpoint credentials are read
from the environment variables named in the config; nothing secret is ever
written to results.
"""

from __future__ import annotations

import argparse
import base64
import json
import sys
from collections import Counter
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .ablations import AblationConfigError, AsrSwapPlan, MaskingPlan, NoisePlan, run_ablation
from .llm_eval import (
    ModelEndpoint,
    make_fixture_transport,
    make_oracle_transport,
    load_fixture_table,
    run_matrix,
    run_protocol,
)
from .metrics import read_records, write_report
from .scenario_gen import Dataset, GenConfig, build_dataset, load_dataset, save_dataset


class ConfigError(ValueError):
    pass


def load_config(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _dataset_cfg(config: dict, seed_override: int | None) -> tuple[GenConfig, Path]:
    d = config.get("dataset", {})
    seed = seed_override if seed_override is not None else config.get("seed", 20250301)
    kwargs = {"seed": seed}
    if "n_scenarios" in d:
        kwargs["n_scenarios"] = d["n_scenarios"]
    if "class_targets" in d:
        kwargs["class_targets"] = dict(d["class_targets"])
    if "icl_per_class" in d:
        kwargs["icl_per_class"] = d["icl_per_class"]
    if "transcript_backend" in d:
        kwargs["transcript_backend"] = d["transcript_backend"]
    path = Path(d.get("path", "dataset"))
    return GenConfig(**kwargs), path


def _generation_client(config: dict, gen_cfg: GenConfig):
    """Generate-callable for the endpoint transcript backend, if configured."""
    if gen_cfg.transcript_backend != "endpoint":
        return None
    name = config.get("dataset", {}).get("generation_endpoint")
    if not name:
        raise ConfigError("endpoint transcript backend needs dataset.generation_endpoint")
    from .llm_eval import make_generation_client

    endpoint = _endpoints(config, [name])[0]
    return make_generation_client(endpoint)


def _endpoints(config: dict, names: list[str]) -> list[ModelEndpoint]:
    table = config.get("endpoints", {})
    out = []
    for name in names:
        if name not in table:
            raise ConfigError(f"endpoint {name!r} not defined in config")
        e = dict(table[name])
        kind = e.pop("kind", "openai-chat")
        out.append(ModelEndpoint(
            name=name,
            kind=kind,
            base_url=e.pop("base_url", ""),
            auth_env=e.pop("auth_env", ""),
            model=e.pop("model", ""),
            supports_logprobs=e.pop("supports_logprobs", False),
            max_parallel=e.pop("max_parallel", 2),
            timeout_s=e.pop("timeout_s", 60.0),
            options=e,
        ))
    return out


def _transports(endpoints: list[ModelEndpoint], dataset: Dataset) -> dict:
    gold = {
        s.id: {"binary": s.label_binary.value, "three_class": s.label3.value}
        for s in dataset.scenarios
    }
    transports = {}
    for ep in endpoints:
        if ep.kind == "mock-oracle":
            transports[ep.name] = make_oracle_transport(
                gold,
                error_rate=float(ep.options.get("error_rate", 0.0)),
                seed=int(ep.options.get("mock_seed", 0)),
            )
        elif ep.kind == "mock-fixture":
            transports[ep.name] = make_fixture_transport(
                load_fixture_table(ep.options["fixture_path"]))
    return transports


def _dataset_summary(ds: Dataset) -> str:
    by_class = Counter(s.label3.value for s in ds.scenarios)
    return (
        f"{len(ds.scenarios)} scenarios "
        f"({by_class['nominal']}/{by_class['warning']}/{by_class['hazard']}), "
        f"icl={len(ds.icl_pool)}, test={len(ds.test_split)}"
    )


def cmd_gen(args) -> int:
    config = load_config(args.config) if args.config else {}
    gen_cfg, path = _dataset_cfg(config, args.seed)
    if args.out:
        path = Path(args.out)
    marker = path / "gen_config.json"
    if marker.exists():
        previous = json.loads(marker.read_text(encoding="utf-8"))
        current = {
            "seed": gen_cfg.seed,
            "n_scenarios": gen_cfg.n_scenarios,
            "class_targets": gen_cfg.class_targets,
            "icl_per_class": gen_cfg.icl_per_class,
            "transcript_backend": gen_cfg.transcript_backend,
        }
        if previous == current:
            ds = load_dataset(path)
            print(f"dataset up to date at {path}: {_dataset_summary(ds)}")
            return 0
    ds = build_dataset(gen_cfg, generate=_generation_client(config, gen_cfg))
    save_dataset(ds, path, gen_cfg)
    print(f"wrote {path}: {_dataset_summary(ds)}")
    return 0


def cmd_eval(args) -> int:
    config = load_config(args.config)
    _, ds_path = _dataset_cfg(config, args.seed)
    ds = load_dataset(ds_path)
    ev = config.get("eval", {})
    endpoints = _endpoints(config, ev.get("endpoints", []))
    if not endpoints:
        raise ConfigError("eval.endpoints is empty")
    out_dir = Path(args.out or config.get("output_dir", "out"))

    if args.attach_image:
        return _qualitative_run(args, ds, endpoints, config)

    records = run_matrix(
        ds,
        endpoints,
        framings=list(ev.get("framings", ["binary"])),
        strategies=list(ev.get("strategies", ["ZS", "OS", "FS"])),
        protocols=list(ev.get("protocols", ["direct", "cot"])),
        results_path=out_dir / "records.jsonl",
        transports=_transports(endpoints, ds),
    )
    errors = sum(1 for r in records if r.error)
    parse_failures = sum(1 for r in records if r.parse_failure)
    write_report(records, out_dir / "report")
    conditions = len({r.condition for r in records})
    print(f"{len(records)} records across {conditions} conditions "
          f"({errors} endpoint errors, {parse_failures} parse failures)")
    print(f"report written to {out_dir / 'report'}")
    return 0


def _qualitative_run(args, ds: Dataset, endpoints, config) -> int:
    """Single-scenario pass-through with an attached image payload."""
    if not args.scenario:
        raise ConfigError("--attach-image requires --scenario")
    target = next((s for s in ds.scenarios if s.id == args.scenario), None)
    if target is None:
        raise ConfigError(f"scenario {args.scenario} not found")
    image_b64 = base64.b64encode(Path(args.attach_image).read_bytes()).decode()
    ep = endpoints[0]
    transports = _transports(endpoints, ds)
    ev = config.get("eval", {})
    framing = list(ev.get("framings", ["binary"]))[0]
    verdict = run_protocol(
        ep, framing, "ZS", "direct", target, ds.icl_pool,
        transport=transports.get(ep.name), attach_image_b64=image_b64,
    )
    print(json.dumps({
        "scenario": target.id,
        "label": verdict.label,
        "confidence": verdict.confidence,
        "reasoning": verdict.reasoning,
        "latency_s": round(verdict.latency_s, 3),
    }, indent=2))
    return 0


def _plan_from_table(t: dict):
    kind = t.get("kind")
    if kind == "mask":
        return MaskingPlan(
            scheme=t.get("scheme", "word"),
            rates=tuple(t.get("rates", (0.10, 0.20, 0.40, 0.60, 0.80))),
            strategy=t.get("strategy", "ZS"),
            protocol=t.get("protocol", "direct"),
            framing=t.get("framing", "three_class"),
            seed=t.get("seed", 0),
        )
    if kind == "noise":
        return NoisePlan(
            nsrs=tuple(t.get("nsrs", (0.05, 0.10, 0.25, 0.50, 0.75))),
            transcriber_cmd=t.get("transcriber_cmd", ""),
            audio_dir=t.get("audio_dir", ""),
            framing=t.get("framing", "three_class"),
            seed=t.get("seed", 0),
        )
    if kind == "asr_swap":
        return AsrSwapPlan(
            transcript_dirs=tuple(t.get("transcript_dirs", ())),
            strategy=t.get("strategy", "ZS"),
            protocol=t.get("protocol", "direct"),
            framing=t.get("framing", "three_class"),
        )
    raise ConfigError(f"unknown ablation kind: {kind!r}")


def cmd_ablate(args) -> int:
    config = load_config(args.config)
    _, ds_path = _dataset_cfg(config, args.seed)
    ds = load_dataset(ds_path)
    plans = config.get("ablations", [])
    if not plans:
        raise ConfigError("no [[ablations]] tables in config")
    out_dir = Path(args.out or config.get("output_dir", "out"))
    all_records = []
    for table in plans:
        endpoints = _endpoints(config, table.get("endpoints", []))
        if not endpoints:
            raise ConfigError("ablation table has no endpoints")
        plan = _plan_from_table(table)
        all_records = run_ablation(
            ds, endpoints, plan, out_dir / "ablation_records.jsonl",
            transports=_transports(endpoints, ds),
        )
    write_report(all_records, out_dir / "ablation_report")
    groups = len({r.condition for r in all_records})
    print(f"{len(all_records)} ablation records across {groups} condition groups")
    print(f"report written to {out_dir / 'ablation_report'}")
    return 0


def cmd_report(args) -> int:
    records = read_records(args.records)
    if not records:
        raise ConfigError(f"no records in {args.records}")
    out_dir = Path(args.out or "report")
    written = write_report(records, out_dir)
    print(f"wrote {len(written)} report files to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctafbench",
        description="Synthetic CTAF traffic benchmark: generate, evaluate, ablate, report.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="build the scenario dataset")
    p_gen.add_argument("--config", default=None)
    p_gen.add_argument("--seed", type=int, default=None)
    p_gen.add_argument("--out", default=None)
    p_gen.set_defaults(func=cmd_gen)

    p_eval = sub.add_parser("eval", help="run the evaluation matrix")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--out", default=None)
    p_eval.add_argument("--attach-image", default=None,
                        help="image file for a qualitative single-scenario run")
    p_eval.add_argument("--scenario", default=None,
                        help="scenario id for --attach-image")
    p_eval.set_defaults(func=cmd_eval)

    p_abl = sub.add_parser("ablate", help="run configured ablation plans")
    p_abl.add_argument("--config", required=True)
    p_abl.add_argument("--seed", type=int, default=None)
    p_abl.add_argument("--out", default=None)
    p_abl.set_defaults(func=cmd_ablate)

    p_rep = sub.add_parser("report", help="render tables and plots from records")
    p_rep.add_argument("records")
    p_rep.add_argument("--out", default=None)
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, AblationConfigError, FileNotFoundError, ValueError) as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
