"""Probability sources: toy table and n-gram models, a remote wire-protocol
client, and preference-prefix construction.

Sources map token contexts to next-token distributions. Toy sources operate
directly on token ids; the only text handling they do is parsing literal ids
out of strings (see `TOY_TOKEN_RULE`). Real tokenization belongs to the
remote backend.
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass

import requests

from .dist import Distribution, check, densify, normalize, SparseDistribution

log = logging.getLogger(__name__)

Context = tuple[int, ...]

TOY_TOKEN_RULE = (
    "toy backends tokenize text by extracting decimal integers "
    "(regex \\d+) in order; everything else is ignored; detokenize joins "
    "ids with single spaces"
)

DEFAULT_PREFIX_TEMPLATE = "[Preference] Your response must satisfy: {descriptions} [Prompt] "

REMOTE_TIMEOUT_ENV = "JUDGED_DECODE_REMOTE_TIMEOUT_MS"


class ContextTooLong(ValueError):
    """Context exceeds the backend's maximum length."""


class BackendUnavailable(RuntimeError):
    """Remote backend unreachable or violating the wire protocol."""


@dataclass(frozen=True)
class PreferenceDescription:
    """One preference statement, e.g. 'Generate a response that is harmless'."""

    text: str
    id: str = ""

    def __post_init__(self):
        if not self.text:
            raise ValueError("preference text must be non-empty")


@dataclass(frozen=True)
class PreferenceAssignment:
    """The two preference sides and the rule assigning them to roles per step."""

    side_a: tuple[PreferenceDescription, ...]
    side_b: tuple[PreferenceDescription, ...]
    schedule: str = "alternate"  # alternate | fixed

    def __post_init__(self):
        if not self.side_a or not self.side_b:
            raise ValueError("both preference sides must be non-empty")
        if self.schedule not in ("alternate", "fixed"):
            raise ValueError(f"unknown schedule {self.schedule!r}")

    def side(self, which: str) -> tuple[PreferenceDescription, ...]:
        if which == "A":
            return self.side_a
        if which == "B":
            return self.side_b
        raise ValueError(f"role side must be 'A' or 'B', got {which!r}")


def split_round_robin(prefs: list[PreferenceDescription], schedule: str = "alternate") -> PreferenceAssignment:
    """Default side assignment: alternate descriptions between A and B.

    A single description lands on both sides, keeping the assignment valid.
    """
    if not prefs:
        raise ValueError("need at least one preference")
    if len(prefs) == 1:
        return PreferenceAssignment((prefs[0],), (prefs[0],), schedule)
    side_a = tuple(prefs[0::2])
    side_b = tuple(prefs[1::2])
    return PreferenceAssignment(side_a, side_b, schedule)


class ProbabilitySource(ABC):
    """Abstract next-token distribution producer over a fixed vocabulary."""

    vocab_size: int
    eos_token: int
    max_context: int

    @abstractmethod
    def next_distribution(self, ctx: Context) -> Distribution:
        """Distribution of the next token after ctx."""

    def next_distributions_batch(self, ctxs: list[Context]) -> list[Distribution]:
        """Element i equals next_distribution(ctxs[i]); remote sources batch this."""
        if not ctxs:
            raise ValueError("batch must be non-empty")
        return [self.next_distribution(c) for c in ctxs]

    def tokenize(self, text: str) -> list[int]:
        """Toy rule: parse literal token ids out of the text."""
        tokens = [int(m) for m in re.findall(r"\d+", text)]
        for t in tokens:
            if t >= self.vocab_size:
                raise ValueError(f"token id {t} outside vocab of {self.vocab_size} (text {text!r})")
        return tokens

    def detokenize(self, tokens: list[int]) -> str:
        return " ".join(str(t) for t in tokens)

    def _check_length(self, ctx: Context) -> None:
        if len(ctx) > self.max_context:
            raise ContextTooLong(f"context length {len(ctx)} exceeds maximum {self.max_context}")


class TableModel(ProbabilitySource):
    """Explicit context-suffix table; unlisted contexts fall back to a default.

    Lookup keys on the last `depth` tokens, so a small table defines a
    complete toy LM. Referentially transparent by construction.
    """

    def __init__(
        self,
        rows: dict[Context, Distribution],
        default: Distribution,
        *,
        depth: int | None = None,
        eos_token: int = 0,
        max_context: int = 512,
        validate: bool = True,
    ):
        if depth is None:
            depth = max((len(k) for k in rows), default=0)
        if depth < 0:
            raise ValueError("depth must be >= 0")
        self.rows = {tuple(k): v for k, v in rows.items()}
        self.default = default
        self.depth = depth
        self.vocab_size = len(default)
        self.eos_token = eos_token
        self.max_context = max_context
        if validate:
            check(default)
            for key, d in self.rows.items():
                if len(key) > depth:
                    raise ValueError(f"row key {key} longer than depth {depth}")
                if len(d) != self.vocab_size:
                    raise ValueError(f"row {key} has vocab {len(d)}, expected {self.vocab_size}")
                check(d)

    def next_distribution(self, ctx: Context) -> Distribution:
        self._check_length(ctx)
        key = ctx[-self.depth:] if self.depth else ()
        return self.rows.get(key, self.default)

    def to_json_dict(self) -> dict:
        return {
            "kind": "table",
            "vocab_size": self.vocab_size,
            "eos_token": self.eos_token,
            "max_context": self.max_context,
            "depth": self.depth,
            "default": [float(p) for p in self.default.probs],
            "rows": {
                " ".join(str(t) for t in key): [float(p) for p in d.probs]
                for key, d in self.rows.items()
            },
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TableModel":
        rows = {
            tuple(int(t) for t in key.split()): Distribution(probs)
            for key, probs in doc.get("rows", {}).items()
        }
        return cls(
            rows,
            Distribution(doc["default"]),
            depth=doc.get("depth"),
            eos_token=doc["eos_token"],
            max_context=doc.get("max_context", 512),
        )


class NGramModel(ProbabilitySource):
    """Additively smoothed n-gram counts over a token stream."""

    def __init__(
        self,
        order: int,
        counts: dict[Context, list[float]],
        vocab_size: int,
        *,
        smoothing: float = 0.5,
        eos_token: int = 0,
        max_context: int = 512,
    ):
        if order < 1:
            raise ValueError("order must be >= 1")
        if smoothing < 0:
            raise ValueError("smoothing must be >= 0")
        self.order = order
        self.counts = {tuple(k): list(v) for k, v in counts.items()}
        self.vocab_size = vocab_size
        self.smoothing = smoothing
        self.eos_token = eos_token
        self.max_context = max_context

    @classmethod
    def from_stream(
        cls,
        stream: list[int],
        order: int,
        vocab_size: int,
        *,
        smoothing: float = 0.5,
        eos_token: int = 0,
        max_context: int = 512,
    ) -> "NGramModel":
        counts: dict[Context, list[float]] = {}
        window = order - 1
        for i in range(window, len(stream)):
            key = tuple(stream[i - window : i])
            row = counts.setdefault(key, [0.0] * vocab_size)
            row[stream[i]] += 1.0
        return cls(order, counts, vocab_size, smoothing=smoothing, eos_token=eos_token, max_context=max_context)

    def next_distribution(self, ctx: Context) -> Distribution:
        self._check_length(ctx)
        window = self.order - 1
        key = ctx[-window:] if window else ()
        row = self.counts.get(key, [0.0] * self.vocab_size)
        return normalize([c + self.smoothing for c in row])

    def to_json_dict(self) -> dict:
        return {
            "kind": "ngram",
            "vocab_size": self.vocab_size,
            "eos_token": self.eos_token,
            "max_context": self.max_context,
            "order": self.order,
            "smoothing": self.smoothing,
            "counts": {" ".join(str(t) for t in key): row for key, row in self.counts.items()},
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "NGramModel":
        counts = {
            tuple(int(t) for t in key.split()): list(row)
            for key, row in doc.get("counts", {}).items()
        }
        return cls(
            doc["order"],
            counts,
            doc["vocab_size"],
            smoothing=doc.get("smoothing", 0.5),
            eos_token=doc["eos_token"],
            max_context=doc.get("max_context", 512),
        )


class SequenceSource(ProbabilitySource):
    """Position-indexed distributions, independent of the tokens themselves.

    Plumbing for flat per-position test cases: position i (relative to
    base_len) always answers dists[i].
    """

    def __init__(self, dists: list[Distribution], *, base_len: int = 0, eos_token: int | None = None):
        if not dists:
            raise ValueError("need at least one distribution")
        self.dists = list(dists)
        self.base_len = base_len
        self.vocab_size = len(dists[0])
        self.eos_token = self.vocab_size - 1 if eos_token is None else eos_token
        self.max_context = base_len + len(dists)

    def next_distribution(self, ctx: Context) -> Distribution:
        idx = len(ctx) - self.base_len
        if not 0 <= idx < len(self.dists):
            raise ContextTooLong(f"no distribution for position {idx}")
        return self.dists[idx]


class PrefixedSource(ProbabilitySource):
    """View of a base source with fixed prefix tokens prepended to every query."""

    def __init__(self, base: ProbabilitySource, prefix: Context):
        self.base = base
        self.prefix = tuple(prefix)
        self.vocab_size = base.vocab_size
        self.eos_token = base.eos_token
        self.max_context = base.max_context - len(self.prefix)
        if self.max_context < 0:
            raise ContextTooLong(f"prefix of {len(self.prefix)} tokens exceeds base maximum {base.max_context}")

    def next_distribution(self, ctx: Context) -> Distribution:
        return self.base.next_distribution(self.prefix + tuple(ctx))

    def next_distributions_batch(self, ctxs: list[Context]) -> list[Distribution]:
        return self.base.next_distributions_batch([self.prefix + tuple(c) for c in ctxs])

    def tokenize(self, text: str) -> list[int]:
        return self.base.tokenize(text)

    def detokenize(self, tokens: list[int]) -> str:
        return self.base.detokenize(tokens)


def resolve_remote_timeout_ms(override: int | None = None) -> int:
    """Request timeout: explicit override, else the env var, else 30000."""
    if override is not None:
        return override
    return int(os.environ.get(REMOTE_TIMEOUT_ENV, "30000"))


class RemoteSource(ProbabilitySource):
    """Client for the /v1 logits wire protocol (see the server package docs).

    Requests are serialized per source; open several sources for parallelism.
    """

    def __init__(self, base_url: str, timeout_ms: int | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = resolve_remote_timeout_ms(timeout_ms) / 1000.0
        self._session = requests.Session()
        self._lock = threading.Lock()
        self._warned_sparse = False
        info = self._get("/v1/model_info")
        self.vocab_size = info["vocab_size"]
        self.eos_token = info["eos_id"]
        self.max_context = info["max_context"]
        self.name = info.get("name", "")

    def _get(self, path: str) -> dict:
        try:
            with self._lock:
                resp = self._session.get(self.base_url + path, timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendUnavailable(f"GET {path}: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnavailable(f"GET {path}: HTTP {resp.status_code}: {resp.text[:200]}")
        return resp.json()

    def _post(self, path: str, payload: dict) -> dict:
        try:
            with self._lock:
                resp = self._session.post(self.base_url + path, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendUnavailable(f"POST {path}: {exc}") from exc
        if resp.status_code == 422:
            raise ContextTooLong(f"POST {path}: {resp.text[:200]}")
        if resp.status_code != 200:
            raise BackendUnavailable(f"POST {path}: HTTP {resp.status_code}: {resp.text[:200]}")
        return resp.json()

    def _decode_result(self, result: dict) -> Distribution:
        if "dense" in result:
            probs = [math.exp(lp) for lp in result["dense"]]
            if len(probs) != self.vocab_size:
                raise BackendUnavailable(f"dense vector of length {len(probs)}, expected {self.vocab_size}")
            total = math.fsum(probs)
            if abs(total - 1.0) > 1e-4:
                raise BackendUnavailable(f"dense vector sums to {total!r} after exponentiation")
            if abs(total - 1.0) > 1e-12:
                probs = [p / total for p in probs]
            return Distribution(probs)
        if "sparse" in result:
            if not self._warned_sparse:
                log.warning(
                    "remote source %s returns sparse vectors; dropped tokens get "
                    "probability zero, which breaks the exact-distribution guarantee",
                    self.base_url,
                )
                self._warned_sparse = True
            sparse = result["sparse"]
            entries = [(tid, math.exp(lp)) for tid, lp in zip(sparse["ids"], sparse["logprobs"])]
            return densify(SparseDistribution(entries, self.vocab_size))
        raise BackendUnavailable(f"result carries neither dense nor sparse payload: {list(result)}")

    def next_distribution(self, ctx: Context) -> Distribution:
        return self.next_distributions_batch([ctx])[0]

    def next_distributions_batch(self, ctxs: list[Context]) -> list[Distribution]:
        if not ctxs:
            raise ValueError("batch must be non-empty")
        for c in ctxs:
            self._check_length(c)
        doc = self._post("/v1/logprobs", {"contexts": [list(c) for c in ctxs]})
        results = doc.get("results", [])
        if len(results) != len(ctxs):
            raise BackendUnavailable(f"{len(results)} results for {len(ctxs)} contexts")
        return [self._decode_result(r) for r in results]

    def tokenize(self, text: str) -> list[int]:
        return self._post("/v1/tokenize", {"text": text})["tokens"]

    def detokenize(self, tokens: list[int]) -> str:
        return self._post("/v1/detokenize", {"tokens": list(tokens)})["text"]


def render_preference_prefix(
    descs: tuple[PreferenceDescription, ...] | list[PreferenceDescription],
    template: str = DEFAULT_PREFIX_TEMPLATE,
) -> str:
    """Render preference descriptions into the prompt prefix text."""
    if not descs:
        raise ValueError("at least one preference description required")
    return template.format(descriptions="; ".join(d.text for d in descs))


def build_prefixed_context(
    assignment: PreferenceAssignment,
    role_side: str,
    base_prompt: Context,
    generated: Context,
    source: ProbabilitySource,
    template: str = DEFAULT_PREFIX_TEMPLATE,
) -> Context:
    """Preference prefix tokens ++ prompt ++ generated, for the given side.

    Extending `generated` by one token appends exactly that token to the
    result, so traces replay against stable prefixes.
    """
    text = render_preference_prefix(assignment.side(role_side), template)
    ctx = tuple(source.tokenize(text)) + tuple(base_prompt) + tuple(generated)
    if len(ctx) > source.max_context:
        raise ContextTooLong(f"prefixed context of {len(ctx)} tokens exceeds maximum {source.max_context}")
    return ctx


def load_model_file(path: str) -> ProbabilitySource:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    kind = doc.get("kind")
    if kind == "table":
        return TableModel.from_json_dict(doc)
    if kind == "ngram":
        return NGramModel.from_json_dict(doc)
    raise ValueError(f"unknown model kind {kind!r} in {path}")


def load_model(spec: str) -> ProbabilitySource:
    """Resolve a model spec string: table:path.json | ngram:path.json | remote:URL."""
    scheme, sep, rest = spec.partition(":")
    if not sep:
        raise ValueError(f"model spec {spec!r} missing scheme (table:|ngram:|remote:)")
    if scheme in ("table", "ngram"):
        source = load_model_file(rest)
        expected = {"table": TableModel, "ngram": NGramModel}[scheme]
        if not isinstance(source, expected):
            raise ValueError(f"{rest} holds a {type(source).__name__}, but spec says {scheme}")
        return source
    if scheme == "remote":
        return RemoteSource(rest)
    raise ValueError(f"unknown model scheme {scheme!r}")
