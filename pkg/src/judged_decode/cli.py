"""Command-line entry point: generate, verify, sweep, and bench subcommands.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 IO error, 4 backend error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import statistics
import sys
import time
from random import Random

from . import dist, oracle
from .models import (
    BackendUnavailable,
    ContextTooLong,
    PreferenceAssignment,
    PreferenceDescription,
    ProbabilitySource,
    load_model,
    split_round_robin,
)
from .judge_decode import GenerationResult, JudgeConfig, generate, judgment_step, lambda_sweep
from .spec_decode import SpecDecodeConfig, spec_decode_generate

EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_BACKEND = 4

ALGORITHMS = ("judge", "judge-base", "spec", "plain")


class ConfigError(ValueError):
    pass


def _prompt_rng(seed: int, prompt_id: str) -> Random:
    # string seeding hashes via sha512, stable across runs and platforms
    return Random(f"{seed}:{prompt_id}")


def _load_prompts(path: str, source: ProbabilitySource) -> list[tuple[str, tuple[int, ...]]]:
    prompts = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            pid = str(record.get("id", line_no))
            if pid in seen:
                raise ConfigError(f"duplicate prompt id {pid!r} in {path}")
            seen.add(pid)
            if "tokens" in record:
                tokens = tuple(int(t) for t in record["tokens"])
            elif "prompt" in record:
                tokens = tuple(source.tokenize(record["prompt"]))
            else:
                raise ConfigError(f"prompt record {pid!r} has neither 'tokens' nor 'prompt'")
            for t in tokens:
                if not 0 <= t < source.vocab_size:
                    raise ConfigError(f"prompt {pid!r}: token {t} outside vocab of {source.vocab_size}")
            prompts.append((pid, tokens))
    if not prompts:
        raise ConfigError(f"no prompts found in {path}")
    return prompts


def _build_assignment(args) -> PreferenceAssignment:
    schedule = "fixed" if args.algorithm == "judge-base" else "alternate"
    side_a = [PreferenceDescription(t, f"a{i}") for i, t in enumerate(args.pref_a or [])]
    side_b = [PreferenceDescription(t, f"b{i}") for i, t in enumerate(args.pref_b or [])]
    if side_a or side_b:
        if not (side_a and side_b):
            raise ConfigError("--pref-a and --pref-b must both be given when either is")
        return PreferenceAssignment(tuple(side_a), tuple(side_b), schedule)
    if args.prefs:
        pool = [PreferenceDescription(t, f"p{i}") for i, t in enumerate(args.prefs)]
        return split_round_robin(pool, schedule)
    raise ConfigError("judge algorithms need preferences (--pref-a/--pref-b or --prefs)")


def _judge_config(args, lam: int | None = None) -> JudgeConfig:
    return JudgeConfig(
        lam=lam if lam is not None else args.lam,
        max_new_tokens=args.max_new_tokens,
        seed=args.seed,
        schedule="fixed" if args.algorithm == "judge-base" else "alternate",
        first_draft_side=args.first_draft_side,
        top_k=args.top_k,
        top_k_scope=args.top_k_scope,
        temperature=args.temperature,
        greedy_draft=args.greedy_draft,
        prefix_template=args.prefix_template,
    )


def plain_generate(
    source: ProbabilitySource,
    prompt: tuple[int, ...],
    max_new_tokens: int,
    rng: Random,
    *,
    temperature: float = 1.0,
    top_k: int | None = None,
) -> GenerationResult:
    """Plain autoregressive sampling baseline, no draft window."""
    start = time.perf_counter()
    output: list[int] = []
    for _ in range(max_new_tokens):
        d = source.next_distribution(tuple(prompt) + tuple(output))
        if temperature != 1.0:
            d = dist.temper(d, temperature)
        if top_k is not None:
            d = dist.top_k_truncate(d, top_k)
        token = dist.sample(d, rng.random())
        output.append(token)
        if token == source.eos_token:
            break
    wall_ms = (time.perf_counter() - start) * 1000.0
    return GenerationResult(
        output_tokens=output,
        traces=[],
        acceptance_rate=None,
        tokens_per_step=1.0,
        wall_time_ms=wall_ms,
        steps=len(output),
    )


def _run_one_prompt(args, source, draft_source, assignment, pid, tokens) -> dict:
    rng = _prompt_rng(args.seed, pid)
    if args.algorithm in ("judge", "judge-base"):
        result = generate(source, assignment, tokens, _judge_config(args), rng)
    elif args.algorithm == "spec":
        cfg = SpecDecodeConfig(
            window=args.window,
            max_new_tokens=args.max_new_tokens,
            seed=args.seed,
            top_k=args.top_k,
            temperature=args.temperature,
        )
        result = spec_decode_generate(draft_source, source, tokens, cfg, rng)
    else:
        result = plain_generate(
            source, tokens, args.max_new_tokens, rng,
            temperature=args.temperature, top_k=args.top_k,
        )
    line = {
        "id": pid,
        "algorithm": args.algorithm,
        "seed": args.seed,
        "prompt_tokens": list(tokens),
        "output_tokens": result.output_tokens,
        "output_text": source.detokenize(result.output_tokens),
        "steps": result.steps,
        "acceptance_rate": result.acceptance_rate,
        "tokens_per_step": result.tokens_per_step,
        "wall_time_ms": result.wall_time_ms,
    }
    if args.trace_verbosity >= 1:
        line["traces"] = [t.to_json_dict(args.trace_verbosity) for t in result.traces]
    return line


def cmd_generate(args) -> int:
    source = load_model(args.model)
    draft_source = load_model(args.draft_model) if args.draft_model else source
    assignment = _build_assignment(args) if args.algorithm in ("judge", "judge-base") else None
    prompts = _load_prompts(args.prompts, source)

    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        if args.jobs <= 1:
            for pid, tokens in prompts:
                line = _run_one_prompt(args, source, draft_source, assignment, pid, tokens)
                out.write(json.dumps(line) + "\n")
        else:
            with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
                futures = {
                    pool.submit(_run_one_prompt, args, source, draft_source, assignment, pid, tokens): idx
                    for idx, (pid, tokens) in enumerate(prompts)
                }
                if args.ordered:
                    results = [None] * len(prompts)
                    for fut in concurrent.futures.as_completed(futures):
                        results[futures[fut]] = fut.result()
                    for line in results:
                        out.write(json.dumps(line) + "\n")
                else:
                    for fut in concurrent.futures.as_completed(futures):
                        out.write(json.dumps(fut.result()) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_verify(args) -> int:
    rng = Random(args.seed)
    reports = []
    all_exact = True
    for case in range(args.cases):
        vocab = 2 + case % max(1, min(args.vocab, oracle.JOINT_MAX_VOCAB) - 1)
        lam = 1 + case % min(args.lam, oracle.JOINT_MAX_WINDOW)
        draft, judge = oracle.random_table_pair(rng, vocab, depth=lam)
        report = oracle.enumerate_step(draft, judge, (0,), lam)
        ok = report.exact_equal and report.event_partition_exact()
        all_exact = all_exact and ok
        doc = report.to_json_dict()
        doc.update(case=case, kind="enumeration", ok=ok)
        reports.append(doc)

    mc_vocab = min(args.vocab, oracle.SINGLE_MAX_VOCAB)
    draft_r, judge_r = oracle.random_table_pair(Random(args.seed + 1), mc_vocab, depth=1)
    draft_f, judge_f = oracle.float_twin(draft_r), oracle.float_twin(judge_r)
    reference = oracle.enumerate_step(draft_r, judge_r, (0,), 1).marginals[0]
    cfg = JudgeConfig(lam=args.lam, max_new_tokens=args.lam + 1)

    def runner(r: Random) -> int:
        emitted, _ = judgment_step(draft_f, judge_f, (0,), cfg, r)
        return emitted[0]

    mc = oracle.monte_carlo_marginal(runner, mc_vocab, args.trials, Random(args.seed + 2), reference)
    mc_ok = mc.tv <= args.tol
    doc = mc.to_json_dict()
    doc.update(kind="monte_carlo", tol=args.tol, ok=mc_ok)
    reports.append(doc)

    payload = {"ok": all_exact and mc_ok, "reports": reports}
    text = json.dumps(payload, indent=2)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return 0 if payload["ok"] else EXIT_VERIFY_FAILED


def _parse_lambda_range(spec: str) -> list[int]:
    spec = spec.strip()
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        values = list(range(int(lo), int(hi) + 1))
    elif "," in spec:
        values = [int(v) for v in spec.split(",")]
    else:
        values = [int(spec)]
    if not values or any(v < 1 for v in values):
        raise ConfigError(f"bad lambda range {spec!r}")
    return values


def cmd_sweep(args) -> int:
    source = load_model(args.model)
    assignment = _build_assignment(args)
    prompts = _load_prompts(args.prompts, source)
    lambdas = _parse_lambda_range(args.lam_range)
    cfg = _judge_config(args, lam=lambdas[0])
    rows = lambda_sweep(
        source, assignment, prompts, lambdas, cfg,
        rng_factory=lambda pid: _prompt_rng(args.seed, pid),
    )
    tsv_lines = ["lambda\tacceptance_rate\ttokens_per_step\twall_time_ms"]
    for row in rows:
        tsv_lines.append(
            f"{row.lam}\t{row.acceptance_rate:.6f}\t{row.tokens_per_step:.6f}\t{row.wall_time_ms:.3f}"
        )
    text = "\n".join(tsv_lines) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(
                [
                    {
                        "lambda": row.lam,
                        "acceptance_rate": row.acceptance_rate,
                        "tokens_per_step": row.tokens_per_step,
                        "accepted_per_step": row.accepted_per_step,
                        "wall_time_ms": row.wall_time_ms,
                        "runs": row.runs,
                    }
                    for row in rows
                ],
                fh,
                indent=2,
            )
            fh.write("\n")
    return 0


def cmd_bench(args) -> int:
    source = load_model(args.model)
    prompts = _load_prompts(args.prompts, source)
    if not args.prefs or len(args.prefs) < max(args.objectives):
        raise ConfigError(f"bench needs at least {max(args.objectives)} --prefs entries")
    pool = [PreferenceDescription(t, f"p{i}") for i, t in enumerate(args.prefs)]

    rows = []
    base_mean = None
    for count in args.objectives:
        assignment = split_round_robin(pool[:count], "alternate")
        times = []
        for pid, tokens in prompts:
            for rep in range(args.repeats):
                rng = _prompt_rng(args.seed + rep, pid)
                result = generate(source, assignment, tokens, _judge_config(args), rng)
                times.append(result.wall_time_ms)
        mean = statistics.fmean(times)
        stdev = statistics.stdev(times) if len(times) > 1 else 0.0
        if base_mean is None:
            base_mean = mean
        rows.append(
            {
                "objectives": count,
                "mean_wall_time_ms": mean,
                "stdev_wall_time_ms": stdev,
                "runs": len(times),
                "relative_to_first": mean / base_mean if base_mean else 1.0,
            }
        )
    for row in rows:
        print(
            f"objectives={row['objectives']}  "
            f"wall_time={row['mean_wall_time_ms']:.3f}ms (+/- {row['stdev_wall_time_ms']:.3f})  "
            f"x{row['relative_to_first']:.3f} vs first"
        )
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
            fh.write("\n")
    return 0


def _add_generate_flags(p: argparse.ArgumentParser, algorithms=ALGORITHMS, lambda_flag: bool = True) -> None:
    p.add_argument("--model", required=True, help="table:path.json | ngram:path.json | remote:URL")
    p.add_argument("--prompts", required=True, help="JSONL prompt file ({id, prompt|tokens})")
    p.add_argument("--algorithm", choices=algorithms, default="judge")
    p.add_argument("--draft-model", default=None, help="draft side for --algorithm spec (default: --model)")
    p.add_argument("--pref-a", action="append", metavar="TEXT", help="preference on side A (repeatable)")
    p.add_argument("--pref-b", action="append", metavar="TEXT", help="preference on side B (repeatable)")
    p.add_argument("--prefs", nargs="+", metavar="TEXT", help="preference pool, split round-robin between sides")
    if lambda_flag:
        p.add_argument("--lambda", dest="lam", type=int, default=4, help="drafted tokens per judgment step")
    p.add_argument("--window", type=int, default=4, help="draft window for --algorithm spec")
    p.add_argument("--max-new-tokens", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--top-k-scope", choices=("draft", "judge", "both"), default="both")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--greedy-draft", action="store_true", help="argmax drafting, stochastic verification")
    p.add_argument("--first-draft-side", choices=("A", "B"), default="A")
    p.add_argument("--prefix-template", default=None, help="override the preference prefix template")
    p.add_argument("--trace-verbosity", type=int, choices=(0, 1, 2), default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="judged-decode")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="decode prompts, one JSONL result line each")
    _add_generate_flags(p)
    p.add_argument("--output", default=None, help="output JSONL path (default stdout)")
    p.add_argument("--jobs", type=int, default=1, help="concurrent prompts")
    p.add_argument("--ordered", action="store_true", help="keep input order under --jobs > 1")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("verify", help="run the exact and Monte Carlo correctness oracles")
    p.add_argument("--vocab", type=int, default=4)
    p.add_argument("--lambda", dest="lam", type=int, default=3)
    p.add_argument("--cases", type=int, default=25, help="random table pairs to enumerate")
    p.add_argument("--trials", type=int, default=200_000)
    p.add_argument("--tol", type=float, default=0.005)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", default=None, help="also write the report to this path")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="sensitivity table over the draft window length")
    _add_generate_flags(p, algorithms=("judge", "judge-base"), lambda_flag=False)
    p.add_argument("--lambda", dest="lam_range", default="1..6", help="window lengths, e.g. 1..6 or 1,2,4")
    p.add_argument("--output", default=None, help="TSV path (default stdout)")
    p.add_argument("--json", default=None, help="also write rows as JSON")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="wall time as preference objectives combine")
    _add_generate_flags(p, algorithms=("judge", "judge-base"))
    p.add_argument("--objectives", type=int, nargs="+", default=[1, 2, 3], choices=(1, 2, 3))
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--json", default=None)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (BackendUnavailable, ContextTooLong) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (OSError, json.JSONDecodeError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
