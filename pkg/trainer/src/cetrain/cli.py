"""Standalone trainer entry point: ``cetrain --config train.json``.

Config fields: dataset, out_weights, features, kernel, epochs, batch_size,
learning_rate, mask_zero_prob, mask_min_rb, mask_max_rb, n_sym, seed,
log_path.
"""

from __future__ import annotations

import argparse
import json
import sys

from .train import TrainConfig, train


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cetrain", description="Train the residual channel denoiser."
    )
    parser.add_argument("--config", required=True, help="training config JSON")
    args = parser.parse_args(argv)
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        config = TrainConfig.from_json(obj)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        path, log = train(config)
    except (OSError, ValueError) as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return 2
    print(f"trained {config.epochs} epochs; final masked loss "
          f"{log[-1]['masked_loss']:.6f}; weights at {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
