"""Command-line entry points.

`microlm` exposes chat, serve, bench, and param-count; `tokenizer-train`
and `dedup` ship as their own executables. Exit codes: 0 success, 1 usage,
2 configuration, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import statistics
import sys
import time
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import dedup as dedup_mod
from .decoder import SamplingPolicy, generate_opener
from .errors import (
    CloudProtocolError,
    CloudTransportError,
    ConfigError,
    DomainError,
    MicrolmError,
)
from .handoff import RECOVERY_MODES, run_collaborative
from .metrics import (
    EnergyReading,
    SessionTimeline,
    compute_dynamic_energy,
    compute_time_to_n_words,
    compute_throughputs,
    compute_ttft,
    word_completion_times,
)
from .model import (
    PAPER_GEOMETRIES,
    ModelConfig,
    ffn_size,
    load_model,
    param_count,
    param_count_label,
)
from .service import ServiceConfig, create_app, load_service_config
from .tokenizer import ChatTranscript, Turn, load_tokenizer, save_tokenizer, train_bpe

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    """argparse reserves exit code 2 for usage errors; this CLI uses 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config_overrides(args: argparse.Namespace) -> dict[str, Any]:
    return {
        "weights_path": getattr(args, "weights", None),
        "tokenizer_path": getattr(args, "tokenizer", None),
        "cloud_base_url": getattr(args, "cloud_url", None),
        "cloud_model": getattr(args, "cloud_model", None),
        "host": getattr(args, "host", None),
        "port": getattr(args, "port", None),
        "default_word_budget": getattr(args, "budget", None),
        "default_mode": getattr(args, "mode", None),
        "temperature": getattr(args, "temperature", None),
        "max_tokens": getattr(args, "max_tokens", None),
    }


def _add_config_flags(p: argparse.ArgumentParser, with_cloud: bool = True) -> None:
    p.add_argument("--config", help="JSON service config file")
    p.add_argument("--weights", help="weights container path (overrides config)")
    p.add_argument("--tokenizer", help="tokenizer JSON path (overrides config)")
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--max-tokens", type=int, default=None, dest="max_tokens")
    if with_cloud:
        p.add_argument("--cloud-url", default=None, dest="cloud_url")
        p.add_argument("--cloud-model", default=None, dest="cloud_model")


def cmd_param_count(args: argparse.Namespace) -> int:
    rows: list[tuple[str, ModelConfig]] = []
    if args.hidden is not None or args.layers is not None:
        if args.hidden is None or args.layers is None:
            raise ConfigError("--hidden and --layers must be given together")
        config = ModelConfig(
            hidden_size=args.hidden,
            n_layers=args.layers,
            n_heads=8,
            n_kv_heads=2,
            head_dim=args.hidden // 8,
            intermediate_size=ffn_size(args.hidden),
            vocab_size=12288,
            max_seq_len=1024,
        )
        rows.append((f"{args.hidden}-{args.layers}", config))
    else:
        for d, n_layers in sorted(PAPER_GEOMETRIES):
            from .model import paper_config

            rows.append((f"{d}-{n_layers}", paper_config(d, n_layers)))
    print(f"{'variant':<10} {'hidden':>6} {'layers':>6} {'params':>12} {'size':>8}")
    for name, config in rows:
        count = param_count(config)
        print(
            f"{name:<10} {config.hidden_size:>6} {config.n_layers:>6} "
            f"{count:>12,} {param_count_label(count):>8}"
        )
    return EXIT_OK


def _print_stream_event(event: dict) -> None:
    kind = event.get("type")
    if kind in ("opener_token", "continuation_token"):
        print(event.get("text_delta", ""), end="", flush=True)
    elif kind == "handoff":
        print("", end="", flush=True)
    elif kind == "error":
        print(f"\n[cloud unavailable: {event.get('message')}]", file=sys.stderr)
    elif kind == "done":
        print(flush=True)


def cmd_chat(args: argparse.Namespace) -> int:
    config = load_service_config(args.config, _config_overrides(args))
    model = load_model(config.weights_path)
    tokenizer = load_tokenizer(config.tokenizer_path)
    policy = SamplingPolicy(temperature=config.temperature, max_tokens=config.max_tokens)

    def one_turn(query: str) -> None:
        if args.no_cloud:
            result = generate_opener(
                model,
                tokenizer,
                ChatTranscript([Turn("user", query)]),
                word_budget=None,
                policy=policy,
                sink=lambda ev: print(ev.text_delta, end="", flush=True),
            )
            print(flush=True)
            return
        # continuation needs a separator when it starts a new word: emit it
        # before the first continuation token so the terminal shows the
        # stitched text exactly
        state = {"opener": "", "continuation_started": False}

        def sink(event: dict) -> None:
            if event.get("type") == "opener_token":
                state["opener"] += event.get("text_delta", "")
            elif event.get("type") == "continuation_token" and not state["continuation_started"]:
                state["continuation_started"] = True
                from .handoff import stitch

                first = event.get("text_delta", "")
                if stitch(state["opener"], first) != state["opener"] + first:
                    print(" ", end="", flush=True)
            _print_stream_event(event)

        run_collaborative(
            query,
            config.default_word_budget,
            config.default_mode,
            model,
            tokenizer,
            config.endpoint(),
            policy=policy,
            sink=sink,
        )

    if args.query is not None:
        one_turn(args.query)
        return EXIT_OK
    print("microlm chat - empty line or EOF exits", file=sys.stderr)
    try:
        while True:
            line = input("> ")
            if not line.strip():
                return EXIT_OK
            one_turn(line)
    except EOFError:
        return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    config = load_service_config(args.config, _config_overrides(args))
    app = create_app(config)  # fails fast on unreadable model/tokenizer
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return EXIT_OK


def _bench_once(model, tokenizer, prompt: str, policy: SamplingPolicy) -> SessionTimeline:
    events: list[tuple[str, float]] = []
    transcript = ChatTranscript([Turn("user", prompt)])
    result = generate_opener(
        model,
        tokenizer,
        transcript,
        word_budget=None,
        policy=policy,
        sink=lambda ev: events.append((ev.text_delta, ev.t_ms)),
    )
    from .tokenizer import render_chat

    prompt_tokens = len(render_chat(tokenizer, transcript, add_generation_prefix=True))
    token_times = tuple(t for _, t in events)
    word_times = tuple(word_completion_times(events, result.text))
    first_token = token_times[0] if token_times else None
    return SessionTimeline(
        request_received=0.0,
        prefill_done=result.timing.prefill_ms,
        first_token=first_token,
        token_times=token_times,
        word_times=word_times,
        done=result.timing.total_ms,
        prompt_tokens=prompt_tokens,
        generated_tokens=len(result.token_ids),
    )


def cmd_bench(args: argparse.Namespace) -> int:
    config = load_service_config(args.config, _config_overrides(args))
    model = load_model(config.weights_path)
    tokenizer = load_tokenizer(config.tokenizer_path)
    policy = SamplingPolicy(temperature=config.temperature, max_tokens=config.max_tokens)

    for _ in range(args.warmup):
        _bench_once(model, tokenizer, args.prompt, policy)

    timelines: list[SessionTimeline] = []
    window_start = time.perf_counter()
    warning = None
    while True:
        elapsed = time.perf_counter() - window_start
        if elapsed >= args.window:
            break
        tl = _bench_once(model, tokenizer, args.prompt, policy)
        if time.perf_counter() - window_start <= args.window:
            timelines.append(tl)
        else:
            break
    if not timelines:
        warning = "window shorter than a single run; no measured runs"

    def median_of(values: list[float]) -> float | None:
        return statistics.median(values) if values else None

    ttfts = [compute_ttft(tl) for tl in timelines if tl.first_token is not None]
    t4s = [
        t
        for tl in timelines
        if (t := compute_time_to_n_words(tl, 4)) is not None
    ]
    throughputs = []
    for tl in timelines:
        try:
            throughputs.append(compute_throughputs(tl))
        except (DomainError, MicrolmError):
            continue
    report: dict[str, Any] = {
        "config": {
            "prompt": args.prompt,
            "window_s": args.window,
            "warmup": args.warmup,
            "temperature": policy.temperature,
            "max_tokens": policy.max_tokens,
            "hidden_size": model.config.hidden_size,
            "n_layers": model.config.n_layers,
            "param_count": model.param_count(),
        },
        "runs": len(timelines),
        "ttft_ms": median_of(ttfts),
        "time_to_4_words_ms": median_of(t4s),
        "throughputs": {
            "prompt_tps": median_of([t.prompt_tps for t in throughputs]),
            "generation_tps": median_of([t.generation_tps for t in throughputs]),
            "end_to_end_tps": median_of([t.end_to_end_tps for t in throughputs]),
        },
    }
    if warning:
        report["warning"] = warning
    if args.energy_log:
        with open(args.energy_log, encoding="utf-8") as f:
            doc = json.load(f)
        reading = EnergyReading(
            before_mj=doc["before_mj"],
            after_mj=doc["after_mj"],
            duration_s=doc["duration_s"],
            idle_power_mw=doc["idle_power_mw"],
        )
        total_tokens = sum(tl.generated_tokens for tl in timelines)
        if total_tokens > 0:
            report["energy_mj_per_token"] = compute_dynamic_energy(reading, total_tokens)

    out = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(out + "\n", encoding="utf-8")
    else:
        print(out)
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["run", "token_index", "t_ms"])
            for ri, tl in enumerate(timelines):
                for ti, t in enumerate(tl.token_times):
                    writer.writerow([ri, ti, f"{t:.3f}"])
    return EXIT_OK


def tokenizer_train_main(argv: Sequence[str] | None = None) -> int:
    parser = _Parser(prog="tokenizer-train", description="Train the byte-level BPE tokenizer")
    parser.add_argument("--input", nargs="+", required=True, help="training text files")
    parser.add_argument("--vocab-size", type=int, default=12288, dest="vocab_size")
    parser.add_argument("--out", required=True, help="output tokenizer JSON path")
    args = parser.parse_args(argv)
    try:
        texts = []
        for p in args.input:
            path = Path(p)
            if not path.is_file():
                raise ConfigError(f"input file not found: {p}")
            texts.append(path.read_text(encoding="utf-8"))
        tokenizer = train_bpe("".join(texts), args.vocab_size)
        save_tokenizer(tokenizer, args.out)
        print(
            f"trained {tokenizer.vocab_size} tokens "
            f"({len(tokenizer.merges)} merges) -> {args.out}"
        )
        return EXIT_OK
    except ConfigError as e:
        print(f"tokenizer-train: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except MicrolmError as e:
        print(f"tokenizer-train: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def _read_ndjson(path: str) -> dict[str, str]:
    docs: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                docs[str(doc["id"])] = str(doc["text"])
            except (json.JSONDecodeError, KeyError) as e:
                raise ConfigError(f"{path}:{lineno}: bad NDJSON record: {e}") from e
    return docs


def dedup_main(argv: Sequence[str] | None = None) -> int:
    parser = _Parser(prog="dedup", description="Flag eval prompts contained in training views")
    parser.add_argument("--eval", required=True, dest="eval_file")
    parser.add_argument("--train", nargs="+", required=True, dest="train_files")
    parser.add_argument("--k", type=int, default=dedup_mod.DEFAULT_K)
    parser.add_argument("--hashes", type=int, default=dedup_mod.DEFAULT_NUM_HASHES)
    parser.add_argument("--bands", type=int, default=dedup_mod.DEFAULT_BANDS)
    parser.add_argument("--threshold", type=float, default=dedup_mod.DEFAULT_THRESHOLD)
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    try:
        eval_docs = _read_ndjson(args.eval_file)
        train_docs: dict[str, str] = {}
        for p in args.train_files:
            train_docs.update(_read_ndjson(p))
        flagged = dedup_mod.flag_contaminated(
            eval_docs,
            train_docs,
            k=args.k,
            num_hashes=args.hashes,
            bands=args.bands,
            threshold=args.threshold,
        )
        records = [
            {"eval_id": p.eval_id, "train_id": p.train_id, "containment": p.containment}
            for p in flagged
        ]
        Path(args.out).write_text(json.dumps(records, indent=2) + "\n", encoding="utf-8")
        print(f"flagged {len(records)} pair(s) -> {args.out}")
        return EXIT_OK
    except FileNotFoundError as e:
        print(f"dedup: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as e:
        print(f"dedup: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except MicrolmError as e:
        print(f"dedup: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="microlm", description="Micro language model inference gateway")
    sub = parser.add_subparsers(dest="command", required=True)

    p_chat = sub.add_parser("chat", parents=[], help="interactive or one-shot chat")
    _add_config_flags(p_chat)
    p_chat.add_argument("--budget", type=int, default=None, help="opener word budget")
    p_chat.add_argument("--mode", choices=RECOVERY_MODES, default=None)
    p_chat.add_argument("--no-cloud", action="store_true", dest="no_cloud")
    p_chat.add_argument("--query", help="answer one query and exit")
    p_chat.set_defaults(func=cmd_chat)

    p_serve = sub.add_parser("serve", help="run the SSE service")
    _add_config_flags(p_serve)
    p_serve.add_argument("--host", default=None)
    p_serve.add_argument("--port", type=int, default=None)
    p_serve.add_argument("--budget", type=int, default=None)
    p_serve.add_argument("--mode", choices=RECOVERY_MODES, default=None)
    p_serve.set_defaults(func=cmd_serve)

    p_bench = sub.add_parser("bench", help="single-turn latency/throughput benchmark")
    _add_config_flags(p_bench, with_cloud=False)
    p_bench.add_argument("--prompt", default="How old is the Space Needle?")
    p_bench.add_argument("--window", type=float, default=90.0, help="measurement window seconds")
    p_bench.add_argument("--warmup", type=int, default=3)
    p_bench.add_argument("--out", help="write the JSON report here instead of stdout")
    p_bench.add_argument("--csv", help="write per-token timestamps CSV")
    p_bench.add_argument("--energy-log", dest="energy_log", help="meter readings JSON")
    p_bench.set_defaults(func=cmd_bench)

    p_params = sub.add_parser("param-count", help="parameter counts for the model family")
    p_params.add_argument("--hidden", type=int, default=None)
    p_params.add_argument("--layers", type=int, default=None)
    p_params.set_defaults(func=cmd_param_count)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"microlm: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (CloudTransportError, CloudProtocolError, MicrolmError, OSError) as e:
        print(f"microlm: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
