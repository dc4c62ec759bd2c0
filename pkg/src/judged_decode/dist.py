"""Arithmetic on token probability distributions.

Two arithmetic modes share one code path: 64-bit floats for the engine and
exact `fractions.Fraction` entries for the verification oracle. A
distribution is homogeneous (all entries float or all Fraction); mixing the
modes in one vector is not supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

Real = Union[float, Fraction]

ENGINE_TOL = 1e-9   # normalization tolerance for engine-side float vectors
REMOTE_TOL = 1e-4   # tolerance for wire-transported vectors (JSON round trip)


class AllZeroMass(ValueError):
    """Raised when a vector with no positive mass would be normalized."""


class Distribution:
    """Probability vector over token ids 0..V-1."""

    __slots__ = ("probs",)

    def __init__(self, probs: Iterable[Real]):
        self.probs = tuple(probs)

    @property
    def vocab_size(self) -> int:
        return len(self.probs)

    @property
    def is_rational(self) -> bool:
        return any(isinstance(p, Fraction) for p in self.probs)

    def support_size(self) -> int:
        return sum(1 for p in self.probs if p > 0)

    def __len__(self) -> int:
        return len(self.probs)

    def __getitem__(self, token: int) -> Real:
        return self.probs[token]

    def __eq__(self, other) -> bool:
        return isinstance(other, Distribution) and self.probs == other.probs

    def __hash__(self) -> int:
        return hash(self.probs)

    def __repr__(self) -> str:
        return f"Distribution({list(self.probs)!r})"

    def to_floats(self) -> "Distribution":
        return Distribution(float(p) for p in self.probs)


@dataclass
class SparseDistribution:
    """Top-k style sparse vector as returned by remote backends."""

    entries: list[tuple[int, float]]
    vocab_size: int

    def __post_init__(self):
        seen = set()
        for token, p in self.entries:
            if not 0 <= token < self.vocab_size:
                raise ValueError(f"token id {token} outside vocab of {self.vocab_size}")
            if token in seen:
                raise ValueError(f"duplicate token id {token}")
            if p < 0:
                raise ValueError(f"negative probability {p} for token {token}")
            seen.add(token)


def _total(probs: Sequence[Real]) -> Real:
    if any(isinstance(p, Fraction) for p in probs):
        return sum(probs, Fraction(0))
    return math.fsum(probs)


def check(d: Distribution, tol: float = ENGINE_TOL) -> Distribution:
    """Validate non-negativity and unit mass; returns d unchanged."""
    if len(d) == 0:
        raise ValueError("empty distribution")
    for p in d.probs:
        if p < 0:
            raise ValueError(f"negative entry {p}")
    total = _total(d.probs)
    if d.is_rational:
        if total != 1:
            raise ValueError(f"rational distribution sums to {total}, not 1")
    elif abs(total - 1.0) > tol:
        raise ValueError(f"distribution sums to {total!r}, outside tolerance {tol}")
    return d


def normalize(raw: Iterable[Real]) -> Distribution:
    """Scale a non-negative vector to unit mass.

    Order-preserving: the argmax and all pairwise order relations of the
    input survive. Raises AllZeroMass when nothing can be scaled.
    """
    values = list(raw)
    rational = any(isinstance(v, Fraction) for v in values)
    if rational:
        values = [Fraction(v) for v in values]
    else:
        values = [float(v) for v in values]
    for v in values:
        if v < 0:
            raise ValueError(f"negative mass {v}")
    total = _total(values)
    if total == 0:
        raise AllZeroMass("no positive mass to normalize")
    return Distribution(v / total for v in values)


def residual(p: Distribution, q: Distribution) -> tuple[Distribution, Real]:
    """Adjusted distribution norm(max(0, p - q)) and the acceptance mass.

    The acceptance mass is sum_t min(p(t), q(t)); the unnormalized residual
    carries exactly 1 - acceptance mass. Raises AllZeroMass when p == q
    pointwise (acceptance mass 1, nothing left to resample).
    """
    if len(p) != len(q):
        raise ValueError(f"vocab mismatch: {len(p)} vs {len(q)}")
    raw = [pi - qi if pi > qi else 0 for pi, qi in zip(p.probs, q.probs)]
    alpha = _total([pi if pi < qi else qi for pi, qi in zip(p.probs, q.probs)])
    mass = _total(raw)
    if mass == 0:
        raise AllZeroMass("p equals q pointwise, residual is empty")
    return Distribution(v / mass for v in raw), alpha


def top_k_truncate(d: Distribution, k: int) -> Distribution:
    """Keep the k largest entries (ties to the lower token id), renormalize.

    Returns d itself when k already covers the support, which makes the
    operation exactly idempotent.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k >= d.support_size():
        return d
    keep = sorted(range(len(d)), key=lambda t: (-d.probs[t], t))[:k]
    kept = set(keep)
    raw = [p if t in kept else 0 for t, p in enumerate(d.probs)]
    return normalize(raw)


def sample(d: Distribution, rng_draw: float) -> int:
    """Inverse-CDF sample: smallest token id whose cumulative mass exceeds the draw.

    Deterministic given the draw, so logged draws replay to the same token.
    The boundary is half-open: a draw equal to a cumulative sum falls into
    the next token's interval.
    """
    acc = 0  # int seed keeps the accumulator exact in both arithmetic modes
    last_positive = 0
    for token, p in enumerate(d.probs):
        if p > 0:
            acc = acc + p
            last_positive = token
            if rng_draw < acc:
                return token
    # float round-off can leave the total a hair under the draw
    return last_positive


def tv_distance(a: Distribution, b: Distribution) -> Real:
    """Total variation distance, half the L1 difference. In [0, 1]."""
    if len(a) != len(b):
        raise ValueError(f"vocab mismatch: {len(a)} vs {len(b)}")
    diffs = [ai - bi if ai > bi else bi - ai for ai, bi in zip(a.probs, b.probs)]
    return _total(diffs) / 2


def densify(s: SparseDistribution) -> Distribution:
    """Expand a sparse vector to full vocab length and renormalize."""
    raw = [0.0] * s.vocab_size
    for token, p in s.entries:
        raw[token] = p
    total = math.fsum(raw)
    if total == 0:
        raise AllZeroMass("sparse vector carries no mass")
    return Distribution(v / total for v in raw)


def temper(d: Distribution, temperature: float) -> Distribution:
    """Temperature as probability exponentiation: p_i ** (1/T), renormalized.

    Equivalent to dividing logits by T before the softmax. Float mode only;
    the oracle path never tempers.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if temperature == 1.0:
        return d
    if d.is_rational:
        raise TypeError("temperature is defined on the float path only")
    inv = 1.0 / temperature
    return normalize([p**inv if p > 0 else 0.0 for p in d.probs])


def argmax(d: Distribution) -> int:
    """Largest-probability token, ties to the lower id."""
    best = 0
    for token in range(1, len(d)):
        if d.probs[token] > d.probs[best]:
            best = token
    return best
