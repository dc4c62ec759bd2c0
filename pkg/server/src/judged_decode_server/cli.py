"""Serve a model on the logits wire protocol."""

from __future__ import annotations

import argparse
import sys

import uvicorn

from .app import create_app
from .backends import ServerConfig, build_backend


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="judged-decode-server", description=__doc__)
    parser.add_argument("--model", required=True, help="table:path.json | hf:path-or-model-id")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8700)
    parser.add_argument("--top-k-return", type=int, default=0, help="0 = dense, k > 0 = sparse top-k responses")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-batch", type=int, default=64)
    args = parser.parse_args(argv)

    config = ServerConfig(
        model=args.model,
        host=args.host,
        port=args.port,
        top_k_return=args.top_k_return,
        device=args.device,
        max_batch=args.max_batch,
    )
    backend = build_backend(config.model, device=config.device)
    app = create_app(backend, config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
