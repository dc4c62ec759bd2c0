#!/usr/bin/env python3
"""Inference-cost demo: wall time as 1, 2, then 3 preference objectives combine."""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from judged_decode.cli import main as cli_main  # noqa: E402

from make_toy_models import main as make_models  # noqa: E402


def main() -> int:
    demo = pathlib.Path("demo")
    if not (demo / "ngram_demo.json").exists():
        make_models()
    return cli_main([
        "bench",
        "--model", f"ngram:{demo / 'ngram_demo.json'}",
        "--prompts", str(demo / "prompts_ngram.jsonl"),
        "--prefs", "0 1", "2 3", "4 5",
        "--objectives", "1", "2", "3",
        "--repeats", "5",
        "--max-new-tokens", "48",
        "--seed", "7",
        "--json", str(demo / "bench.json"),
    ])


if __name__ == "__main__":
    sys.exit(main())
