"""Independent brute-force verifiers for the draft-and-judge step.

The enumerator never samples and never calls the engine: it integrates the
step's semantics in closed form. A drafted token t at a speculative position
is kept with probability min(1, p(t)/q(t)), so the kept mass per token is
min(q(t), p(t)); the rejection branch resamples from the adjusted
distribution, contributing max(0, p(t') - q(t')) per token. Summing the two
branches gives p(t') pointwise, which is the correctness lemma this module
makes executable. Positions after the step's own emission are integrated as
the verifier's autoregressive continuation, so the enumerated window joint is
comparable to the verifier's plain autoregressive joint of the same length.

With Fraction-valued sources every mass here is exact; equality against the
reference is literal equality, not a tolerance check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from random import Random
from typing import Callable, Sequence

from .dist import Distribution, tv_distance
from .models import Context, ProbabilitySource, SequenceSource, TableModel

JOINT_MAX_VOCAB = 8
JOINT_MAX_WINDOW = 3
SINGLE_MAX_VOCAB = 16


class EnumerationTooLarge(ValueError):
    """Requested enumeration exceeds the desk-scale guard thresholds."""


@dataclass
class EventRecord:
    """Acceptance/rejection mass split at one speculative position.

    Masses are conditional on the emitted prefix; accepted[t] + rejected[t]
    must reconstruct the verifier's p(t) exactly.
    """

    prefix: tuple[int, ...]
    position: int
    accepted: tuple
    rejected: tuple
    reference: tuple
    alpha: object  # sum_t min(q, p)

    def partition_exact(self) -> bool:
        return all(a + r == p for a, r, p in zip(self.accepted, self.rejected, self.reference))


@dataclass
class EnumerationReport:
    window: int
    vocab_size: int
    joint: dict[tuple[int, ...], object]
    reference_joint: dict[tuple[int, ...], object]
    marginals: list[Distribution]
    reference_marginals: list[Distribution]
    max_abs_deviation: float
    exact_equal: bool
    events: list[EventRecord] = field(default_factory=list)

    def event_partition_exact(self) -> bool:
        return all(e.partition_exact() for e in self.events)

    def to_json_dict(self) -> dict:
        return {
            "window": self.window,
            "vocab_size": self.vocab_size,
            "exact_equal": self.exact_equal,
            "max_abs_deviation": float(self.max_abs_deviation),
            "event_partition_exact": self.event_partition_exact(),
            "marginals": [[float(p) for p in m.probs] for m in self.marginals],
            "reference_marginals": [[float(p) for p in m.probs] for m in self.reference_marginals],
        }


def _guard(vocab: int, window: int) -> None:
    if window == 1:
        if vocab > SINGLE_MAX_VOCAB:
            raise EnumerationTooLarge(f"vocab {vocab} exceeds single-position limit {SINGLE_MAX_VOCAB}")
        return
    if vocab > JOINT_MAX_VOCAB or window > JOINT_MAX_WINDOW:
        raise EnumerationTooLarge(
            f"vocab {vocab}, window {window} exceeds joint limits "
            f"({JOINT_MAX_VOCAB}, {JOINT_MAX_WINDOW})"
        )


def _zero_like(value) -> object:
    return Fraction(0) if isinstance(value, Fraction) else 0.0


def _enumerate_step(
    draft: ProbabilitySource,
    judge: ProbabilitySource,
    ctx: Context,
    window: int,
) -> tuple[dict, list[EventRecord]]:
    """Integrate the step over all drafted tuples and rejection positions.

    Walks emitted prefixes: while speculative, a position splits into the
    kept branch (mass min(q, p) per token, stays speculative) and the
    resampled branch (mass max(0, p - q) per token, continues as the
    verifier's autoregressive extension). The bonus position after a fully
    kept window and every extension position contribute p directly.
    """
    ctx = tuple(ctx)
    joint: dict[tuple[int, ...], object] = {}
    events: list[EventRecord] = []

    def recurse(emitted: tuple[int, ...], mass, speculative: bool) -> None:
        position = len(emitted)
        if position == window + 1:
            joint[emitted] = joint.get(emitted, _zero_like(mass)) + mass
            return
        p = judge.next_distribution(ctx + emitted)
        if speculative and position < window:
            q = draft.next_distribution(ctx + emitted)
            accepted = tuple(min(qt, pt) for qt, pt in zip(q.probs, p.probs))
            rejected = tuple(pt - qt if pt > qt else _zero_like(pt) for qt, pt in zip(q.probs, p.probs))
            events.append(
                EventRecord(
                    prefix=emitted,
                    position=position,
                    accepted=accepted,
                    rejected=rejected,
                    reference=p.probs,
                    alpha=sum(accepted),
                )
            )
            for t in range(len(p)):
                if accepted[t] > 0:
                    recurse(emitted + (t,), mass * accepted[t], True)
                if rejected[t] > 0:
                    recurse(emitted + (t,), mass * rejected[t], False)
        else:
            # bonus position of a fully kept window, or autoregressive extension
            for t, pt in enumerate(p.probs):
                if pt > 0:
                    recurse(emitted + (t,), mass * pt, False)

    one = Fraction(1) if judge.next_distribution(ctx).is_rational else 1.0
    recurse((), one, True)
    return joint, events


def _reference_joint(judge: ProbabilitySource, ctx: Context, length: int) -> dict:
    ctx = tuple(ctx)
    joint: dict[tuple[int, ...], object] = {}

    def recurse(emitted: tuple[int, ...], mass) -> None:
        if len(emitted) == length:
            joint[emitted] = mass
            return
        p = judge.next_distribution(ctx + emitted)
        for t, pt in enumerate(p.probs):
            if pt > 0:
                recurse(emitted + (t,), mass * pt)

    one = Fraction(1) if judge.next_distribution(ctx).is_rational else 1.0
    recurse((), one)
    return joint


def _marginals(joint: dict, vocab: int, length: int) -> list[Distribution]:
    out = []
    for pos in range(length):
        probs = [_zero_like(next(iter(joint.values()), 0.0))] * vocab if joint else [0.0] * vocab
        for seq, mass in joint.items():
            probs[seq[pos]] = probs[seq[pos]] + mass
        out.append(Distribution(probs))
    return out


def enumerate_step(
    draft: ProbabilitySource,
    judge: ProbabilitySource,
    ctx: Context,
    window: int,
) -> EnumerationReport:
    """Exact emitted-window distribution of one step versus the judge reference."""
    if window < 1:
        raise ValueError("window must be >= 1")
    vocab = judge.vocab_size
    _guard(vocab, window)
    joint, events = _enumerate_step(draft, judge, ctx, window)
    reference = _reference_joint(judge, ctx, window + 1)
    keys = set(joint) | set(reference)
    zero = _zero_like(next(iter(reference.values())))
    deviation = max(
        (abs(joint.get(k, zero) - reference.get(k, zero)) for k in keys),
        default=zero,
    )
    return EnumerationReport(
        window=window,
        vocab_size=vocab,
        joint=joint,
        reference_joint=reference,
        marginals=_marginals(joint, vocab, window + 1),
        reference_marginals=_marginals(reference, vocab, window + 1),
        max_abs_deviation=deviation,
        exact_equal=deviation == 0,
        events=events,
    )


def enumerate_step_marginal(
    q_dists: Sequence[Distribution] | ProbabilitySource,
    p_dists: Sequence[Distribution] | ProbabilitySource,
    window: int,
    ctx: Context = (),
) -> EnumerationReport:
    """enumerate_step over flat per-position distributions or full sources.

    Sequence inputs describe a position-indexed process: q_dists supplies the
    window draft vectors, p_dists the window + 1 judge vectors.
    """
    if isinstance(q_dists, ProbabilitySource):
        draft = q_dists
    else:
        if len(q_dists) < window:
            raise ValueError(f"need {window} draft distributions, got {len(q_dists)}")
        draft = SequenceSource(list(q_dists), base_len=len(ctx))
    if isinstance(p_dists, ProbabilitySource):
        judge = p_dists
    else:
        if len(p_dists) < window + 1:
            raise ValueError(f"need {window + 1} judge distributions, got {len(p_dists)}")
        judge = SequenceSource(list(p_dists), base_len=len(ctx))
    return enumerate_step(draft, judge, ctx, window)


def verify_spec_decode(
    draft: TableModel | ProbabilitySource,
    target: TableModel | ProbabilitySource,
    window: int,
    prompt: Context = (),
) -> EnumerationReport:
    """Losslessness check: enumerated emitted window equals the target joint."""
    return enumerate_step(draft, target, prompt, window)


@dataclass
class MonteCarloReport:
    empirical: Distribution
    reference: Distribution
    tv: float
    trials: int

    def to_json_dict(self) -> dict:
        return {
            "trials": self.trials,
            "tv": float(self.tv),
            "empirical": [float(p) for p in self.empirical.probs],
            "reference": [float(p) for p in self.reference.probs],
        }


def monte_carlo_marginal(
    step_runner: Callable[[Random], int],
    vocab_size: int,
    trials: int,
    rng: Random,
    reference: Distribution,
) -> MonteCarloReport:
    """Empirical emitted-token frequencies from real engine steps.

    step_runner executes one engine step with the supplied generator and
    returns the token under test (typically the first emitted one).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    counts = [0] * vocab_size
    for _ in range(trials):
        counts[step_runner(rng)] += 1
    empirical = Distribution(c / trials for c in counts)
    return MonteCarloReport(
        empirical=empirical,
        reference=reference.to_floats(),
        tv=float(tv_distance(empirical, reference.to_floats())),
        trials=trials,
    )


def random_table_pair(
    rng: Random,
    vocab: int,
    depth: int,
    *,
    rational: bool = True,
    max_weight: int = 9,
    allow_zero: bool = True,
) -> tuple[TableModel, TableModel]:
    """Seeded random (draft, judge) table pair over every suffix up to depth.

    Integer weights keep the rational tables exact and their float twins
    bit-identical to the exact values rounded once.
    """

    def random_dist() -> Distribution:
        while True:
            low = 0 if allow_zero else 1
            weights = [rng.randint(low, max_weight) for _ in range(vocab)]
            total = sum(weights)
            if total > 0:
                break
        if rational:
            return Distribution(Fraction(w, total) for w in weights)
        return Distribution(w / total for w in weights)

    def random_table() -> TableModel:
        rows: dict[Context, Distribution] = {}

        def fill(prefix: tuple[int, ...]) -> None:
            rows[prefix] = random_dist()
            if len(prefix) < depth:
                for t in range(vocab):
                    fill(prefix + (t,))

        fill(())
        return TableModel(rows, rows[()], depth=depth, eos_token=vocab - 1, validate=False)

    return random_table(), random_table()


def float_twin(table: TableModel) -> TableModel:
    """Float-mode copy of a rational table, sharing suffix keys and depth."""
    rows = {k: d.to_floats() for k, d in table.rows.items()}
    return TableModel(
        rows,
        table.default.to_floats(),
        depth=table.depth,
        eos_token=table.eos_token,
        max_context=table.max_context,
        validate=False,
    )
