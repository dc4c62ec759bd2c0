"""Standard two-model speculative decoding: a draft model proposes a window
of tokens, a target model verifies them in parallel, and the output stream
stays distributed exactly as the target model alone would produce.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from random import Random

from .kernel import StepOutcome, emitted_tokens, run_step
from .models import Context, ProbabilitySource
from .judge_decode import GenerationResult


@dataclass
class SpecDecodeConfig:
    window: int = 4          # candidate tokens drafted per step
    max_new_tokens: int = 64
    seed: int = 0
    top_k: int | None = None
    temperature: float = 1.0

    def __post_init__(self):
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")


@dataclass
class SpecStepTrace:
    step: int
    drafted_tokens: list[int]
    draft_token_probs: list[float]
    target_token_probs: list[float]
    draft_draws: list[float]
    accept_draws: list[float]
    n: int
    residual_used: bool
    residual_degenerate: bool
    final_draw: float
    emitted_tokens: list[int]
    stop: str | None = None

    def to_json_dict(self, verbosity: int = 2) -> dict:
        doc = {
            "step": self.step,
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
                target_token_probs=self.target_token_probs,
                draft_draws=self.draft_draws,
                accept_draws=self.accept_draws,
                final_draw=self.final_draw,
            )
        return doc


def _trace(outcome: StepOutcome, step: int, emitted: list[int], stop: str | None) -> SpecStepTrace:
    return SpecStepTrace(
        step=step,
        drafted_tokens=outcome.drafted,
        draft_token_probs=[float(p) for p in outcome.draft_token_probs],
        target_token_probs=[float(p) for p in outcome.verify_token_probs],
        draft_draws=outcome.draft_draws,
        accept_draws=outcome.accept_draws,
        n=outcome.n,
        residual_used=outcome.residual_used,
        residual_degenerate=outcome.residual_degenerate,
        final_draw=outcome.final_draw,
        emitted_tokens=emitted,
        stop=stop,
    )


def spec_decode_step(
    draft: ProbabilitySource,
    target: ProbabilitySource,
    ctx: Context,
    cfg: SpecDecodeConfig,
    rng: Random,
    *,
    step: int = 0,
    max_emit: int | None = None,
) -> tuple[list[int], SpecStepTrace]:
    """One verification window. Acceptance at a position requires every
    earlier position accepted; the step emits the surviving prefix plus one
    token from the target's residual (or its next vector when all survive).
    """
    outcome = run_step(
        draft,
        target,
        ctx,
        cfg.window,
        rng,
        temperature=cfg.temperature,
        top_k=cfg.top_k,
        top_k_scope="both",
    )
    emitted, stop = emitted_tokens(outcome, target.eos_token, max_emit)
    return emitted, _trace(outcome, step, emitted, stop)


def spec_decode_generate(
    draft: ProbabilitySource,
    target: ProbabilitySource,
    prompt: Context,
    cfg: SpecDecodeConfig,
    rng: Random,
) -> GenerationResult:
    start = time.perf_counter()
    prompt = tuple(prompt)
    output: list[int] = []
    traces: list[SpecStepTrace] = []
    step = 0
    while len(output) < cfg.max_new_tokens:
        emitted, trace = spec_decode_step(
            draft,
            target,
            prompt + tuple(output),
            cfg,
            rng,
            step=step,
            max_emit=cfg.max_new_tokens - len(output),
        )
        output.extend(emitted)
        traces.append(trace)
        step += 1
        if trace.stop == "eos":
            break
    wall_ms = (time.perf_counter() - start) * 1000.0
    total_n = sum(t.n for t in traces)
    total_window = cfg.window * len(traces)
    return GenerationResult(
        output_tokens=output,
        traces=traces,
        acceptance_rate=total_n / total_window if total_window else 0.0,
        tokens_per_step=len(output) / len(traces) if traces else 0.0,
        wall_time_ms=wall_ms,
    )
