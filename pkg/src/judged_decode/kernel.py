"""Shared draft-verify-resample step kernel.

One proposal source drafts `window` tokens autoregressively; one verifier
source scores the growing contexts in a single batch; tokens survive while
the uniform draw stays at or below the probability ratio; the first failure
triggers a resample from the adjusted (residual) distribution. Both the
standard two-model decoder and the preference-judged decoder run this exact
kernel and differ only in what the two sources are.
"""

from __future__ import annotations

from dataclasses import dataclass
from random import Random

from . import dist
from .dist import Distribution
from .models import Context, ProbabilitySource

RESIDUAL_MASS_FLOOR = 1e-12  # below this, treat the float residual as rounding noise


@dataclass
class StepOutcome:
    """Raw record of one kernel invocation; replayable from the logged draws."""

    drafted: list[int]            # t_1..t_window proposed by the draft side
    draft_token_probs: list[float]   # q_i(t_i)
    verify_token_probs: list[float]  # p_i(t_i)
    draft_draws: list[float]      # uniform draws behind each t_i (empty in greedy mode)
    accept_draws: list[float]     # epsilon_1..epsilon_window
    n: int                        # reserved (accepted) draft count
    residual_used: bool           # final token came from the adjusted distribution branch
    residual_degenerate: bool     # float residual mass under the floor; fell back to p_{n+1}
    final_token: int
    final_draw: float


def accept_count(ratios: list, draws: list[float]) -> int:
    """Reserved count n: index before the first draw that exceeds its ratio.

    Ratios are raw p/q values (may exceed 1); rejection is strict
    (draw > ratio), so a ratio of 1 can never reject.
    """
    if len(ratios) != len(draws):
        raise ValueError(f"{len(ratios)} ratios vs {len(draws)} draws")
    for i, (ratio, draw) in enumerate(zip(ratios, draws)):
        if draw > ratio:
            return i
    return len(ratios)


def _prepare(d: Distribution, temperature: float, top_k: int | None) -> Distribution:
    if temperature != 1.0:
        d = dist.temper(d, temperature)
    if top_k is not None:
        d = dist.top_k_truncate(d, top_k)
    return d


def run_step(
    proposal: ProbabilitySource,
    verifier: ProbabilitySource,
    ctx: Context,
    window: int,
    rng: Random,
    *,
    temperature: float = 1.0,
    top_k: int | None = None,
    top_k_scope: str = "both",
    greedy_draft: bool = False,
) -> StepOutcome:
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if proposal.vocab_size != verifier.vocab_size:
        raise ValueError(f"vocab mismatch: {proposal.vocab_size} vs {verifier.vocab_size}")
    if top_k_scope not in ("draft", "judge", "both"):
        raise ValueError(f"unknown top_k_scope {top_k_scope!r}")
    draft_k = top_k if top_k_scope in ("draft", "both") else None
    verify_k = top_k if top_k_scope in ("judge", "both") else None

    ctx = tuple(ctx)
    drafted: list[int] = []
    draft_dists: list[Distribution] = []
    draft_draws: list[float] = []
    draft_token_probs: list[float] = []
    c = ctx
    for _ in range(window):
        q = _prepare(proposal.next_distribution(c), temperature, draft_k)
        if greedy_draft:
            t = dist.argmax(q)
        else:
            draw = rng.random()
            t = dist.sample(q, draw)
            draft_draws.append(draw)
        drafted.append(t)
        draft_dists.append(q)
        draft_token_probs.append(q[t])
        c = c + (t,)

    contexts = [ctx + tuple(drafted[:i]) for i in range(window + 1)]
    verify_dists = [
        _prepare(p, temperature, verify_k)
        for p in verifier.next_distributions_batch(contexts)
    ]
    verify_token_probs = [verify_dists[i][t] for i, t in enumerate(drafted)]

    accept_draws = [rng.random() for _ in range(window)]
    ratios = [p / q for p, q in zip(verify_token_probs, draft_token_probs)]
    n = accept_count(ratios, accept_draws)

    residual_used = n < window
    residual_degenerate = False
    if residual_used:
        try:
            adjusted, alpha = dist.residual(verify_dists[n], draft_dists[n])
            if 1 - alpha < RESIDUAL_MASS_FLOOR:
                raise dist.AllZeroMass("residual mass below floor")
        except dist.AllZeroMass:
            # analytically impossible after a rejection; rounding guard only
            adjusted = verify_dists[n]
            residual_degenerate = True
        final_dist = adjusted
    else:
        final_dist = verify_dists[window]

    final_draw = rng.random()
    final_token = dist.sample(final_dist, final_draw)

    return StepOutcome(
        drafted=drafted,
        draft_token_probs=draft_token_probs,
        verify_token_probs=verify_token_probs,
        draft_draws=draft_draws,
        accept_draws=accept_draws,
        n=n,
        residual_used=residual_used,
        residual_degenerate=residual_degenerate,
        final_token=final_token,
        final_draw=final_draw,
    )


def emitted_tokens(outcome: StepOutcome, eos_token: int, max_emit: int | None = None) -> tuple[list[int], str | None]:
    """Tokens the step contributes to the output, with the stop reason.

    Emits the reserved drafts plus the final token, cut at the first eos
    (inclusive) and at the remaining token budget.
    """
    tokens = outcome.drafted[: outcome.n] + [outcome.final_token]
    stop = None
    if eos_token in tokens:
        tokens = tokens[: tokens.index(eos_token) + 1]
        stop = "eos"
    if max_emit is not None and len(tokens) >= max_emit:
        if len(tokens) > max_emit:
            tokens = tokens[:max_emit]
            stop = "budget"
        elif stop is None:
            stop = "budget"
    return tokens, stop
