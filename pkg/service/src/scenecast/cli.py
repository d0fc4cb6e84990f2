"""Command line entry points: train a checkpoint, serve it."""
from __future__ import annotations

import argparse
import sys

from .data import make_dataset
from .errors import ScenecastError
from .train import Hyperparams, save_checkpoint, train


def _cmd_train(args) -> int:
    hp = Hyperparams(
        window_length=args.window,
        horizon=args.horizon,
        max_epochs=args.max_epochs,
        gated=not args.ungated,
        seed=args.seed,
    )
    dataset = make_dataset(
        length=args.length,
        window_length=args.window,
        horizon=args.horizon,
        seed=args.seed,
        noise=args.noise,
    )
    model, result = train(dataset, hp)
    save_checkpoint(args.out, model, hp, dataset.grid, dataset.vocab,
                    val_mse=result.val_mse)
    print(f"trained {result.epochs_run} epochs, "
          f"val mse {result.val_mse:.6f}, wrote {args.out}")
    return 0


def _cmd_serve(args) -> int:
    if args.stdio:
        from .service import serve_stdio

        serve_stdio(args.checkpoint)
        return 0
    from .service import build_server

    server = build_server(args.checkpoint, args.host, args.port)
    host, port = server.server_address[:2]
    print(f"serving {args.checkpoint} on http://{host}:{port}/v1/forecast")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="scenecast",
        description="Scene-gated curve forecaster: train and serve",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train on the synthetic two-scene set")
    p_train.add_argument("--out", required=True, help="checkpoint output path")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--max-epochs", type=int, default=50)
    p_train.add_argument("--window", type=int, default=16)
    p_train.add_argument("--horizon", type=int, default=4)
    p_train.add_argument("--length", type=int, default=240)
    p_train.add_argument("--noise", type=float, default=0.05)
    p_train.add_argument("--ungated", action="store_true",
                         help="ablation: identity embeddings without the gate")
    p_train.set_defaults(func=_cmd_train)

    p_serve = sub.add_parser("serve", help="answer the forecast protocol")
    p_serve.add_argument("--checkpoint", required=True)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8765)
    p_serve.add_argument("--stdio", action="store_true",
                         help="line-delimited stdin/stdout instead of HTTP")
    p_serve.set_defaults(func=_cmd_serve)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenecastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
