"""Command-line entry point: generation, import, evaluation, ablation, and
inference-engine self checks over JSON config files.

Exit codes: 0 ok, 1 config/parse error, 2 I/O or file-format error,
3 missing dependency artifact (e.g. model file).
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import tempfile
from importlib.metadata import version as pkg_version

import numpy as np

from . import config as cfg
from . import dataset as ds
from . import evaluate as ev
from . import nn
from .generate import generate_records

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_MISSING = 3

_SCHEMA_NOTE = (
    "Config files are JSON documents validated against the schemas published "
    "in the README (section 'Configuration schema') and exported as "
    "cebench.config.GENERATE_SCHEMA / ABLATE_SCHEMA."
)


class MissingArtifactError(FileNotFoundError):
    pass


def _atomic_text(path: str, text: str) -> None:
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cmd_generate(args) -> int:
    obj = cfg.load_json_config(args.config)
    cfg.validate(obj, cfg.GENERATE_SCHEMA, args.config)
    spec, n_records, seed = cfg.parse_generator_spec(obj)
    if args.seed is not None:
        seed = args.seed
    base_truths = None
    if args.from_dataset:
        try:
            _, imported = ds.read_dataset(args.from_dataset)
        except FileNotFoundError:
            raise MissingArtifactError(f"dataset not found: {args.from_dataset}")
        base_truths = [rec.truth for rec in imported]
    records = generate_records(
        spec, n_records, root_seed=seed, threads=args.threads, base_truths=base_truths
    )
    n_bytes = ds.write_dataset(
        records, args.out, toggles=spec.impairments.toggles.to_json(), seed=seed
    )
    digest = hashlib.sha256(open(args.out, "rb").read()).hexdigest()
    print(f"wrote {len(records)} records to {args.out} ({n_bytes} bytes) sha256={digest}")
    return EXIT_OK


def cmd_import(args) -> int:
    obj = cfg.load_json_config(args.grid_config)
    cfg.validate(obj, {"type": "object", "required": ["grid"]}, args.grid_config)
    grid = cfg.parse_grid(obj["grid"])
    records = ds.import_external_cfr(args.csv, grid)
    n_bytes = ds.write_dataset(records, args.out, toggles={}, seed=0)
    print(f"imported {len(records)} truth-only records to {args.out} ({n_bytes} bytes)")
    return EXIT_OK


def cmd_eval(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in ("LS", "MMSE", "AI"):
            raise cfg.ConfigError(f"unknown method {m!r} (choose from LS, MMSE, AI)")
    model = None
    if "AI" in methods:
        if not args.model:
            raise MissingArtifactError("method 'AI' requires --model")
        if not os.path.exists(args.model):
            raise MissingArtifactError(f"model file not found: {args.model}")
        model = nn.load_model(args.model)
    try:
        _, records = ds.read_dataset(args.dataset)
    except FileNotFoundError:
        raise ds.DatasetFormatError(f"dataset not found: {args.dataset}")
    report = ev.sweep_dataset(records, methods, seed=args.seed, model=model,
                              threads=args.threads)
    _atomic_text(args.out, report.to_csv())
    if args.plot:
        ev.plot_sweep(report, args.plot)
    print(f"wrote {len(report.rows)} sweep rows to {args.out}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    obj = cfg.load_json_config(args.config)
    cfg.validate(obj, cfg.ABLATE_SCHEMA, args.config)
    seed = args.seed if args.seed is not None else int(obj.get("seed", 0))
    cases, models = [], {}
    for case_obj in obj["cases"]:
        name = case_obj["name"]
        path = case_obj["model"]
        if not os.path.exists(path):
            raise MissingArtifactError(f"missing model file for case {name!r}: {path}")
        cases.append(ev.AblationCase(name=name, train_overrides=case_obj.get("train", {})))
        models[name] = nn.load_model(path)
    test = obj["test"]
    grid = cfg.parse_grid(test["grid"])
    profile = cfg.parse_profile(test.get("profile"))
    impairments = cfg.parse_impairments(test.get("impairments"), grid.n_ant)
    from .generate import GeneratorSpec

    spec = GeneratorSpec(grid=grid, profile=profile, impairments=impairments)
    table = ev.ablation_run(
        cases, obj["snr_grid_db"], spec, models,
        n_records=int(obj["records_per_snr"]), seed=seed, threads=args.threads,
    )
    _atomic_text(args.out, table.to_csv(annotate_reference=args.reference))
    print(f"wrote ablation table ({len(table.rows)} rows) to {args.out}")
    return EXIT_OK


def cmd_infer_check(args) -> int:
    """Run the inference-engine fixtures; with --model, validate that file."""
    failures = 0
    ident = nn.identity_model(n_sym=3, n_ant=2)
    rng = np.random.Generator(np.random.PCG64(7))
    x = rng.normal(size=(1, 6, 48, 2)).astype(np.float32)
    err = float(np.max(np.abs(nn.infer(ident, x) - x)))
    ok = err < 1e-6
    failures += not ok
    print(f"identity fixture: max abs err {err:.2e} {'PASS' if ok else 'FAIL'}")

    import tempfile as _tf

    with _tf.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "roundtrip.bin")
        model = nn.random_model(n_sym=2, n_ant=2, features=5, kernel=3, seed=11)
        nn.write_weights(model, path)
        loaded = nn.load_model(path)
        same = all(
            np.array_equal(a.weight, b.weight) and np.array_equal(a.bias, b.bias)
            for (_, a), (_, b) in zip(model.layers(), loaded.layers())
        )
        failures += not same
        print(f"weight round trip: {'PASS' if same else 'FAIL'}")

    bench = nn.random_model(n_sym=3, n_ant=2, features=32, kernel=3, seed=1)
    rate = nn.infer_throughput(bench, n_pilots=96, reps=10)
    print(f"reference throughput (F=32, 96 pilots): {rate:.1f} records/s")

    if args.model:
        if not os.path.exists(args.model):
            raise MissingArtifactError(f"model file not found: {args.model}")
        model = nn.load_model(args.model)
        rate = nn.infer_throughput(model, n_pilots=96, reps=10)
        print(
            f"loaded model: {model.features} features, kernel {model.kernel}, "
            f"activation {model.activation}; throughput {rate:.1f} records/s"
        )
    return EXIT_OK if failures == 0 else EXIT_CONFIG


def cmd_version(_args) -> int:
    try:
        print(pkg_version("cebench"))
    except Exception:
        print("0.1.0")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cebench",
        description="Channel-estimation workbench: dataset generation, "
        "estimator evaluation and impairment ablations.",
        epilog=_SCHEMA_NOTE,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize an impaired dataset",
                       epilog=_SCHEMA_NOTE)
    p.add_argument("--config", required=True, help="generate config JSON")
    p.add_argument("--out", required=True, help="output dataset path")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--from-dataset", default=None,
                   help="re-impair the truth channels of an existing dataset")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("import", help="import external channel CSV as truth-only dataset",
                       epilog=_SCHEMA_NOTE)
    p.add_argument("--csv", required=True)
    p.add_argument("--grid-config", required=True, help="JSON file with a 'grid' object")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("eval", help="sweep estimators over a dataset", epilog=_SCHEMA_NOTE)
    p.add_argument("--dataset", required=True)
    p.add_argument("--methods", default="LS,MMSE", help="comma list of LS,MMSE,AI")
    p.add_argument("--model", default=None, help="weight file (required for AI)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--plot", default=None, help="optional plot image path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="impairment-ablation table", epilog=_SCHEMA_NOTE)
    p.add_argument("--config", required=True, help="ablation config JSON")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--reference", action="store_true",
                   help="append published full-scale reference figures")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("infer-check", help="run inference-engine fixtures",
                       epilog=_SCHEMA_NOTE)
    p.add_argument("--model", default=None, help="also validate this weight file")
    p.set_defaults(func=cmd_infer_check)

    p = sub.add_parser("version", help="print version")
    p.set_defaults(func=cmd_version)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (cfg.ConfigError, ds.CsvParseError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ds.DatasetFormatError, nn.WeightFormatError) as exc:
        print(f"file format error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
