#!/usr/bin/env python3
"""Write demo model files and prompt sets for the CLI examples in the README."""

import argparse
import json
import pathlib
import sys
from random import Random

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from judged_decode.models import NGramModel  # noqa: E402
from judged_decode.oracle import random_table_pair  # noqa: E402


def build_table(seed: int = 31):
    table, _ = random_table_pair(Random(seed), vocab=6, depth=2, rational=False)
    return table


def build_ngram(seed: int = 61):
    rng = Random(seed)
    # random walk over tokens 0..6 with mild momentum; token 7 reserved as eos
    stream = [rng.randint(0, 6)]
    for _ in range(6000):
        if rng.random() < 0.6:
            stream.append((stream[-1] + rng.choice((0, 1))) % 7)
        else:
            stream.append(rng.randint(0, 6))
    return NGramModel.from_stream(stream, order=4, vocab_size=8, smoothing=0.2, eos_token=7)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="demo", help="output directory")
    args = parser.parse_args()

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    (out / "table_demo.json").write_text(json.dumps(build_table().to_json_dict(), indent=1) + "\n")
    (out / "ngram_demo.json").write_text(json.dumps(build_ngram().to_json_dict()) + "\n")

    prompts = [{"id": f"p{i}", "tokens": [i % 6]} for i in range(4)]
    (out / "prompts_table.jsonl").write_text("".join(json.dumps(p) + "\n" for p in prompts))
    prompts = [{"id": f"n{i}", "tokens": [i % 7, (i + 2) % 7]} for i in range(4)]
    (out / "prompts_ngram.jsonl").write_text("".join(json.dumps(p) + "\n" for p in prompts))

    print(f"wrote table_demo.json, ngram_demo.json and prompt files under {out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
