"""Model backends served behind the /v1 wire protocol.

A backend answers natural-log next-token probabilities for batches of token
contexts and owns tokenization. The toy table backend reads the engine's
documented table JSON format and mirrors its text conventions (token ids are
rendered as space-joined decimal integers), so a served table is
indistinguishable from the same table loaded in-process.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

LOG_ZERO = -1e9  # stands in for ln(0); exp underflows to exactly 0.0


@dataclass
class ServerConfig:
    model: str                    # table:path.json | hf:path-or-id
    host: str = "127.0.0.1"
    port: int = 8700
    top_k_return: int = 0         # 0 = dense vectors, k > 0 = sparse top-k
    device: str = "cpu"
    max_batch: int = 64

    def __post_init__(self):
        if self.top_k_return < 0:
            raise ValueError("top_k_return must be >= 0")


class ModelBackend:
    """Interface the app serves; implementations fill the attributes."""

    vocab_size: int
    eos_id: int
    max_context: int
    name: str
    ready: bool = True

    def logprobs_batch(self, contexts: list[list[int]]) -> list[list[float]]:
        raise NotImplementedError

    def tokenize(self, text: str) -> list[int]:
        raise NotImplementedError

    def detokenize(self, tokens: list[int]) -> str:
        raise NotImplementedError


class TableBackend(ModelBackend):
    """Toy table model loaded from the engine's table JSON schema.

    Lookup keys on the last `depth` context tokens; unlisted suffixes answer
    the default row.
    """

    def __init__(self, path: str):
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("kind") != "table":
            raise ValueError(f"{path} is not a table model file")
        self.vocab_size = doc["vocab_size"]
        self.eos_id = doc["eos_token"]
        self.max_context = doc.get("max_context", 512)
        self.name = doc.get("name", "toy-table")
        self.depth = doc.get("depth", 0)
        self.default = [float(p) for p in doc["default"]]
        self.rows = {
            tuple(int(t) for t in key.split()): [float(p) for p in probs]
            for key, probs in doc.get("rows", {}).items()
        }
        for probs in list(self.rows.values()) + [self.default]:
            if len(probs) != self.vocab_size:
                raise ValueError("row length does not match vocab_size")
            if abs(math.fsum(probs) - 1.0) > 1e-9:
                raise ValueError("row does not sum to 1")

    def logprobs_batch(self, contexts: list[list[int]]) -> list[list[float]]:
        out = []
        for ctx in contexts:
            key = tuple(ctx[-self.depth:]) if self.depth else ()
            probs = self.rows.get(key, self.default)
            out.append([math.log(p) if p > 0 else LOG_ZERO for p in probs])
        return out

    def tokenize(self, text: str) -> list[int]:
        tokens = [int(m) for m in re.findall(r"\d+", text)]
        for t in tokens:
            if t >= self.vocab_size:
                raise ValueError(f"token id {t} outside vocab of {self.vocab_size}")
        return tokens

    def detokenize(self, tokens: list[int]) -> str:
        return " ".join(str(t) for t in tokens)


class HFBackend(ModelBackend):
    """Causal LM served through transformers; probabilities are raw model
    outputs, temperature and truncation stay engine-side."""

    def __init__(self, model_path: str, device: str = "cpu"):
        import torch
        from transformers import AutoModelForCausalLM, AutoTokenizer

        self._torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(model_path)
        self.model = AutoModelForCausalLM.from_pretrained(model_path).to(device).eval()
        self.device = device
        config = self.model.config
        self.vocab_size = config.vocab_size
        eos = self.tokenizer.eos_token_id
        if eos is None:
            eos = getattr(config, "eos_token_id", None)
        if eos is None:
            raise ValueError(f"{model_path} declares no eos token")
        self.eos_id = int(eos)
        self.max_context = int(
            getattr(config, "n_positions", None)
            or getattr(config, "max_position_embeddings", None)
            or 1024
        )
        self.name = getattr(config, "name_or_path", model_path)

    def logprobs_batch(self, contexts: list[list[int]]) -> list[list[float]]:
        torch = self._torch
        bos = self.tokenizer.bos_token_id
        padded = []
        lengths = []
        for ctx in contexts:
            if not ctx:
                if bos is None:
                    raise ValueError("empty context and the model has no bos token")
                ctx = [bos]
            padded.append(list(ctx))
            lengths.append(len(ctx))
        width = max(lengths)
        input_ids = torch.zeros((len(padded), width), dtype=torch.long)
        mask = torch.zeros((len(padded), width), dtype=torch.long)
        for i, ctx in enumerate(padded):
            input_ids[i, : len(ctx)] = torch.tensor(ctx, dtype=torch.long)
            mask[i, : len(ctx)] = 1
        with torch.no_grad():
            logits = self.model(
                input_ids=input_ids.to(self.device),
                attention_mask=mask.to(self.device),
            ).logits
        rows = []
        for i, length in enumerate(lengths):
            logprobs = torch.log_softmax(logits[i, length - 1, :].double(), dim=-1)
            rows.append([float(v) for v in logprobs.tolist()])
        return rows

    def tokenize(self, text: str) -> list[int]:
        return self.tokenizer.encode(text, add_special_tokens=False)

    def detokenize(self, tokens: list[int]) -> str:
        return self.tokenizer.decode(tokens, skip_special_tokens=False)


def build_backend(spec: str, device: str = "cpu") -> ModelBackend:
    scheme, sep, rest = spec.partition(":")
    if not sep:
        raise ValueError(f"model spec {spec!r} missing scheme (table:|hf:)")
    if scheme == "table":
        return TableBackend(rest)
    if scheme == "hf":
        return HFBackend(rest, device=device)
    raise ValueError(f"unknown backend scheme {scheme!r}")
