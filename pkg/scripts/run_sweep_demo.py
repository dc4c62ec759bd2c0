#!/usr/bin/env python3
"""Window-length sensitivity demo: table of lambda vs acceptance and throughput."""

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
        "sweep",
        "--model", f"ngram:{demo / 'ngram_demo.json'}",
        "--prompts", str(demo / "prompts_ngram.jsonl"),
        "--pref-a", "0 1 2", "--pref-b", "4 5 6",
        "--lambda", "1..6",
        "--max-new-tokens", "48",
        "--seed", "19",
        "--json", str(demo / "sweep.json"),
    ])


if __name__ == "__main__":
    sys.exit(main())
