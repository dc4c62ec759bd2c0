"""Preference-judged decoding: a draft side conditioned on one preference
proposes a window of tokens, a judge side conditioned on another preference
accepts, rejects, and resamples them, and the two sides swap roles between
steps. Both sides are the same underlying model behind different prefixes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from random import Random

from .kernel import StepOutcome, accept_count, emitted_tokens, run_step
from .models import (
    Context,
    PreferenceAssignment,
    PrefixedSource,
    ProbabilitySource,
    render_preference_prefix,
)

__all__ = [
    "JudgeConfig",
    "JudgmentStepTrace",
    "GenerationResult",
    "accept_count",
    "judgment_step",
    "generate",
    "lambda_sweep",
]


@dataclass
class JudgeConfig:
    lam: int = 4                      # drafted tokens per judgment step
    max_new_tokens: int = 64
    seed: int = 0
    schedule: str | None = None       # alternate | fixed | None = inherit from assignment
    first_draft_side: str = "A"
    top_k: int | None = None
    top_k_scope: str = "both"         # draft | judge | both
    temperature: float = 1.0
    greedy_draft: bool = False
    prefix_template: str | None = None

    def __post_init__(self):
        if self.lam < 1:
            raise ValueError(f"lam must be >= 1, got {self.lam}")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.schedule not in (None, "alternate", "fixed"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.first_draft_side not in ("A", "B"):
            raise ValueError(f"first_draft_side must be A or B, got {self.first_draft_side!r}")


@dataclass
class JudgmentStepTrace:
    """One executed judgment step, replayable from its logged draws."""

    step: int
    draft_side: str
    drafted_tokens: list[int]
    draft_token_probs: list[float]
    judge_token_probs: list[float]
    draft_draws: list[float]
    accept_draws: list[float]
    n: int
    residual_used: bool
    residual_degenerate: bool
    final_draw: float
    emitted_tokens: list[int]
    stop: str | None = None  # eos | budget | None

    def to_json_dict(self, verbosity: int = 2) -> dict:
        doc = {
            "step": self.step,
            "draft_side": self.draft_side,
            "n": self.n,
            "residual_used": self.residual_used,
            "residual_degenerate": self.residual_degenerate,
            "emitted_tokens": self.emitted_tokens,
            "stop": self.stop,
        }
        if verbosity >= 2:
            doc.update(
                drafted_tokens=self.drafted_tokens,
                draft_token_probs=self.draft_token_probs,
                judge_token_probs=self.judge_token_probs,
                draft_draws=self.draft_draws,
                accept_draws=self.accept_draws,
                final_draw=self.final_draw,
            )
        return doc


@dataclass
class GenerationResult:
    output_tokens: list[int]
    traces: list
    acceptance_rate: float | None
    tokens_per_step: float
    wall_time_ms: float
    steps: int = 0

    def __post_init__(self):
        if not self.steps:
            self.steps = len(self.traces)


def _trace_from_outcome(outcome: StepOutcome, step: int, side: str, emitted: list[int], stop: str | None) -> JudgmentStepTrace:
    return JudgmentStepTrace(
        step=step,
        draft_side=side,
        drafted_tokens=outcome.drafted,
        draft_token_probs=[float(p) for p in outcome.draft_token_probs],
        judge_token_probs=[float(p) for p in outcome.verify_token_probs],
        draft_draws=outcome.draft_draws,
        accept_draws=outcome.accept_draws,
        n=outcome.n,
        residual_used=outcome.residual_used,
        residual_degenerate=outcome.residual_degenerate,
        final_draw=outcome.final_draw,
        emitted_tokens=emitted,
        stop=stop,
    )


def judgment_step(
    draft: ProbabilitySource,
    judge: ProbabilitySource,
    ctx: Context,
    cfg: JudgeConfig,
    rng: Random,
    *,
    draft_side: str = "A",
    step: int = 0,
    max_emit: int | None = None,
) -> tuple[list[int], JudgmentStepTrace]:
    """One draft-and-judge window over already-prefixed sources.

    Drafts cfg.lam tokens from the draft side, scores the lam+1 growing
    contexts with the judge in one batch, keeps the surviving prefix, and
    appends one token from the judge's adjusted (or plain next) distribution.
    """
    outcome = run_step(
        draft,
        judge,
        ctx,
        cfg.lam,
        rng,
        temperature=cfg.temperature,
        top_k=cfg.top_k,
        top_k_scope=cfg.top_k_scope,
        greedy_draft=cfg.greedy_draft,
    )
    emitted, stop = emitted_tokens(outcome, judge.eos_token, max_emit)
    return emitted, _trace_from_outcome(outcome, step, draft_side, emitted, stop)


def generate(
    source: ProbabilitySource,
    assignment: PreferenceAssignment,
    prompt: Context,
    cfg: JudgeConfig,
    rng: Random,
) -> GenerationResult:
    """Run judgment steps until the budget or an eos token ends the stream.

    Under schedule=alternate the draft side flips every step starting from
    cfg.first_draft_side; under schedule=fixed it never flips. Both roles are
    the one underlying source, differing only in preference prefix.
    """
    start = time.perf_counter()
    kwargs = {} if cfg.prefix_template is None else {"template": cfg.prefix_template}
    sides = {
        side: PrefixedSource(
            source,
            tuple(source.tokenize(render_preference_prefix(assignment.side(side), **kwargs))),
        )
        for side in ("A", "B")
    }
    schedule = cfg.schedule or assignment.schedule

    prompt = tuple(prompt)
    output: list[int] = []
    traces: list[JudgmentStepTrace] = []
    side = cfg.first_draft_side
    step = 0
    while len(output) < cfg.max_new_tokens:
        other = "B" if side == "A" else "A"
        emitted, trace = judgment_step(
            sides[side],
            sides[other],
            prompt + tuple(output),
            cfg,
            rng,
            draft_side=side,
            step=step,
            max_emit=cfg.max_new_tokens - len(output),
        )
        output.extend(emitted)
        traces.append(trace)
        step += 1
        if trace.stop == "eos":
            break
        if schedule == "alternate":
            side = other
    wall_ms = (time.perf_counter() - start) * 1000.0
    total_n = sum(t.n for t in traces)
    total_lam = cfg.lam * len(traces)
    return GenerationResult(
        output_tokens=output,
        traces=traces,
        acceptance_rate=total_n / total_lam if total_lam else 0.0,
        tokens_per_step=len(output) / len(traces) if traces else 0.0,
        wall_time_ms=wall_ms,
    )


@dataclass
class SweepRow:
    lam: int
    acceptance_rate: float
    tokens_per_step: float
    wall_time_ms: float
    accepted_per_step: float = 0.0
    runs: int = 0


def lambda_sweep(
    source: ProbabilitySource,
    assignment: PreferenceAssignment,
    prompts: list[tuple[str, Context]],
    lambdas: list[int],
    cfg: JudgeConfig,
    rng_factory,
) -> list[SweepRow]:
    """One generate pass per (lambda, prompt); aggregated metrics per lambda.

    rng_factory(prompt_id) supplies the per-prompt generator so every lambda
    sees the same draw streams.
    """
    if not lambdas:
        raise ValueError("lambdas must be non-empty")
    rows = []
    for lam in lambdas:
        run_cfg = JudgeConfig(
            lam=lam,
            max_new_tokens=cfg.max_new_tokens,
            seed=cfg.seed,
            schedule=cfg.schedule,
            first_draft_side=cfg.first_draft_side,
            top_k=cfg.top_k,
            top_k_scope=cfg.top_k_scope,
            temperature=cfg.temperature,
            greedy_draft=cfg.greedy_draft,
            prefix_template=cfg.prefix_template,
        )
        total_n = 0
        total_lam = 0
        total_tokens = 0
        total_steps = 0
        wall = 0.0
        for prompt_id, prompt in prompts:
            result = generate(source, assignment, prompt, run_cfg, rng_factory(prompt_id))
            total_n += sum(t.n for t in result.traces)
            total_lam += lam * len(result.traces)
            total_tokens += len(result.output_tokens)
            total_steps += len(result.traces)
            wall += result.wall_time_ms
        rows.append(
            SweepRow(
                lam=lam,
                acceptance_rate=total_n / total_lam if total_lam else 0.0,
                tokens_per_step=total_tokens / total_steps if total_steps else 0.0,
                wall_time_ms=wall,
                accepted_per_step=total_n / total_steps if total_steps else 0.0,
                runs=len(prompts),
            )
        )
    return rows
