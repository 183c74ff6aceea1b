"""Command-line entry point (``sewrecon``).

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
The data root defaults to ``$SEWRECON_DATA`` when ``--data`` is omitted.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("sewrecon")

DATA_ENV = "SEWRECON_DATA"
EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _overrides(pairs: list[str]) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = _parse_value(value)
    return out


def _data_root(args) -> str | None:
    return args.data or os.environ.get(DATA_ENV)


def _require_data(args) -> str:
    root = _data_root(args)
    if not root:
        raise UsageError(f"no data root: pass --data or set {DATA_ENV}")
    return root


def _config(args):
    from .training import load_config

    overrides = _overrides(args.set)
    root = _data_root(args)
    if root:
        overrides["data_root"] = root
    try:
        return load_config(args.config, args.preset, overrides)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad configuration: {exc}") from exc


def _families(text: str) -> dict[str, int]:
    out = {}
    for part in text.split(","):
        name, _, count = part.partition("=")
        if not count.isdigit():
            raise UsageError(f"--families expects name=count[,...], got {text!r}")
        out[name.strip()] = int(count)
    return out


# --- commands ----------------------------------------------------------------

def cmd_gen_synthetic(args) -> int:
    from .synthetic import SyntheticSpec, generate_synthetic_dataset, write_dataset

    root = _require_data(args)
    spec = SyntheticSpec(_families(args.families), unseen=args.unseen or [], n_val=args.n_val, n_test=args.n_test)
    patterns, meshes, cmap, split = generate_synthetic_dataset(spec, np.random.default_rng(args.seed))
    write_dataset(root, patterns, meshes, cmap, split)
    print(f"wrote {len(patterns)} samples to {root} "
          f"(train {len(split.train)}, val {len(split.validation)}, "
          f"test seen {len(split.test_seen)}, test unseen {len(split.test_unseen)})")
    return EXIT_OK


def cmd_prepare_data(args) -> int:
    from .dataio import prepare_dataset

    stats = prepare_dataset(_require_data(args), args.n_points, args.seed)
    print(f"normalization stats {stats.stats_id}")
    return EXIT_OK


def cmd_train_shape(args) -> int:
    from .training import train_shape

    config = _config(args)
    path = train_shape(config, args.out)
    print(path)
    return EXIT_OK


def cmd_train_stitch(args) -> int:
    from .training import train_stitch

    config = _config(args)
    path = train_stitch(config, args.shape, args.out, source=args.source)
    print(path)
    return EXIT_OK


def read_cloud(path: Path) -> np.ndarray:
    """``.npy`` arrays or whitespace/comma separated ``.xyz``/``.txt``/``.csv`` text."""
    if path.suffix == ".npy":
        pts = np.load(path, allow_pickle=False)
    elif path.suffix in (".xyz", ".txt", ".csv"):
        pts = np.loadtxt(path, delimiter="," if path.suffix == ".csv" else None, ndmin=2)
    else:
        raise ValueError(f"unsupported cloud format {path.suffix!r}")
    pts = np.asarray(pts, dtype=float)
    if pts.ndim != 2 or pts.shape[1] < 3:
        raise ValueError(f"expected an (N, 3) array, got shape {pts.shape}")
    pts = pts[:, :3]
    if not np.isfinite(pts).all():
        raise ValueError("non-finite coordinates")
    return pts


def cmd_predict(args) -> int:
    from .pattern import save_pattern
    from .pipeline import ShapePredictor
    from .stitcher import predict_stitches
    from .training import load_stitch_checkpoint, set_determinism

    set_determinism(1)
    predictor = ShapePredictor.from_checkpoint(args.shape)
    stitcher = load_stitch_checkpoint(args.stitch)[0] if args.stitch else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failed = 0
    for name in args.clouds:
        path = Path(name)
        try:
            cloud = read_cloud(path)
            k = predictor.model.config.k_neighbors
            if len(cloud) <= k:
                raise ValueError(f"need more than {k} points, got {len(cloud)}")
            pattern = predictor.predict([cloud])[0]
            if stitcher is not None:
                pattern.stitches = predict_stitches(pattern, stitcher)
            pattern.garment_type = pattern.garment_type or "predicted"
            save_pattern(pattern, out / f"{path.stem}.json")
            (out / f"{path.stem}.log").write_text("".join(f"{line}\n" for line in pattern.decode_log))
            print(f"{path}: {len(pattern.panels)} panels, {len(pattern.stitches)} stitches")
        except Exception as exc:  # one bad file must not stop the batch
            failed += 1
            print(f"{path}: error: {exc}", file=sys.stderr)
    return EXIT_RUNTIME if failed else EXIT_OK


def _eval_dataset(args):
    from .dataio import GarmentDataset

    return GarmentDataset(_require_data(args))


def cmd_evaluate(args) -> int:
    from .pipeline import EvalOptions, evaluate, format_table, report_json
    from .training import set_determinism

    set_determinism(1)
    options = EvalOptions(seed=args.seed, sigma=args.sigma, scan=args.scan, splits=tuple(args.splits))
    report = evaluate(args.shape, _eval_dataset(args), args.stitch, options)
    if args.out:
        Path(args.out).write_text(report_json(report))
    print(format_table(report))
    return EXIT_OK


def cmd_noise_sweep(args) -> int:
    from .pipeline import noise_sweep, report_json
    from .training import set_determinism

    set_determinism(1)
    sweep = noise_sweep(args.shape, _eval_dataset(args), args.sigmas, args.stitch, args.seed, tuple(args.splits))
    if args.out:
        Path(args.out).write_text(report_json(sweep))
    splits = [s for s in args.splits if s in sweep["table"][0]]
    print("sigma  " + "  ".join(f"{s + ' panel_l2':>22}" for s in splits))
    for row in sweep["table"]:
        print(f"{row['sigma']:<5.2f}  " + "  ".join(f"{row[s]['panel_l2']:>22.3f}" for s in splits))
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sewrecon", description="Sewing pattern reconstruction from point clouds.")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_arg(sp):
        sp.add_argument("--data", help=f"dataset root (default: ${DATA_ENV})")

    def config_args(sp):
        data_arg(sp)
        sp.add_argument("--config", help="TOML or JSON training configuration")
        sp.add_argument("--preset", default="desk", choices=["desk", "paper"])
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field")

    sp = sub.add_parser("gen-synthetic", help="generate a synthetic garment dataset")
    data_arg(sp)
    sp.add_argument("--families", default="skirt=300,top=300,tee=300,dress=100")
    sp.add_argument("--unseen", nargs="*", default=["dress"])
    sp.add_argument("--n-val", type=int, default=15)
    sp.add_argument("--n-test", type=int, default=15)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_gen_synthetic)

    sp = sub.add_parser("prepare-data", help="fit normalization statistics on the training split")
    data_arg(sp)
    sp.add_argument("--n-points", type=int, default=2000)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_prepare_data)

    sp = sub.add_parser("train-shape", help="train the pattern shape model")
    config_args(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train_shape)

    sp = sub.add_parser("train-stitch", help="train the edge-pair stitch classifier")
    config_args(sp)
    sp.add_argument("--shape", required=True, help="shape checkpoint")
    sp.add_argument("--source", choices=["predictions", "gt"], default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train_stitch)

    sp = sub.add_parser("predict", help="reconstruct patterns from point-cloud files")
    sp.add_argument("--shape", required=True)
    sp.add_argument("--stitch")
    sp.add_argument("--out", required=True)
    sp.add_argument("clouds", nargs="+", help=".npy, .xyz, .txt or .csv point clouds")
    sp.set_defaults(func=cmd_predict)

    splits = ["test_seen", "test_unseen"]
    sp = sub.add_parser("evaluate", help="metrics on the test splits")
    data_arg(sp)
    sp.add_argument("--shape", required=True)
    sp.add_argument("--stitch")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sigma", type=float, default=0.0, help="gaussian noise (cm)")
    sp.add_argument("--scan", action="store_true", help="apply scan imitation")
    sp.add_argument("--splits", nargs="+", default=splits, choices=["train", "validation", *splits])
    sp.add_argument("--out", help="JSON report path")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("noise-sweep", help="metrics across gaussian noise levels")
    data_arg(sp)
    sp.add_argument("--shape", required=True)
    sp.add_argument("--stitch")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sigmas", type=float, nargs="+", default=[0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
    sp.add_argument("--splits", nargs="+", default=splits, choices=["train", "validation", *splits])
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_noise_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sewrecon: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"sewrecon: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
