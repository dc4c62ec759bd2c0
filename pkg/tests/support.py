"""Shared helpers for the test suite."""

import json
import re

from judged_decode.dist import Distribution
from judged_decode.models import TableModel


def D(*probs):
    return Distribution(probs)


def one_hot(token: int, vocab: int) -> Distribution:
    return Distribution(1.0 if t == token else 0.0 for t in range(vocab))


def flat_table(d: Distribution, eos: int | None = None, max_context: int = 512) -> TableModel:
    """Context-independent model that always answers d."""
    vocab = len(d)
    return TableModel({}, d, depth=0, eos_token=vocab - 1 if eos is None else eos, max_context=max_context)


def write_json(path, doc) -> str:
    path.write_text(json.dumps(doc) + "\n", encoding="utf-8")
    return str(path)


def write_jsonl(path, records) -> str:
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return str(path)


def strip_wall_time(text: str) -> str:
    """Remove wall_time fields from JSONL output for determinism comparison."""
    lines = []
    for line in text.splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        doc.pop("wall_time_ms", None)
        for trace in doc.get("traces", []):
            trace.pop("wall_time_ms", None)
        lines.append(json.dumps(doc))
    return "\n".join(lines)
