"""Command-line entry point for the phantom -> corrupt -> dataset -> train
-> correct -> evaluate workflow.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 numerical error.  Options resolve as CLI flag > config file (JSON,
flat option names) > built-in default, and every run writes
run_manifest.json with the resolved configuration, seeds, and version.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, metrics, nn
from .errors import MrimotionError, NumericalError, ValidationError
from .motion import TrajectoryConfig, corrupt, load_trajectory, random_trajectory, save_trajectory
from .phantom import generate, load_phantom_spec, random_spec, save_phantom_spec, standard_spec
from .pipeline import (
    DatasetConfig,
    DatasetManifest,
    build_dataset,
    correct_volume,
    fit_pristine_model,
    run_evaluation,
    run_training,
)
from .preprocess import denormalize, estimate_foreground, normalize
from .volume import extract_slice, load_volume, save_volume, write_pgm16


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(","))


def _add_common(sub):
    sub.add_argument("--out-dir", required=True, help="directory for outputs")
    sub.add_argument("--seed", type=int, default=None, help="master seed")
    sub.add_argument("--config", default=None, help="JSON config file")


def _build_parser() -> _Parser:
    parser = _Parser(prog="mrimotion",
                     description="simulate and suppress rigid-motion artifacts in MR volumes")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = subs.add_parser("phantom", help="generate synthetic phantom volumes")
    _add_common(p)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--dims", type=_ints, default=None)
    p.add_argument("--standard", action="store_true", help="emit the fixed standard phantom")
    p.add_argument("--spec", default=None, help="render an existing spec file")

    p = subs.add_parser("corrupt", help="motion-corrupt a volume")
    _add_common(p)
    p.add_argument("--input", required=True, help="volume basepath")
    p.add_argument("--trajectory", default=None, help="trajectory manifest to apply")
    p.add_argument("--max-translation", type=float, default=None)
    p.add_argument("--max-rotation", type=float, default=None)

    p = subs.add_parser("dataset", help="build the train/test corpus")
    _add_common(p)
    p.add_argument("--train-phantoms", type=int, default=None)
    p.add_argument("--test-phantoms", type=int, default=None)
    p.add_argument("--motions", type=int, default=None)
    p.add_argument("--dims", type=_ints, default=None)

    p = subs.add_parser("train", help="train the correction network")
    _add_common(p)
    p.add_argument("--dataset", required=True, help="dataset directory (uses its train split)")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--channels", type=_ints, default=None)

    p = subs.add_parser("correct", help="apply trained weights to a volume")
    _add_common(p)
    p.add_argument("--weights", required=True, help="weights basepath")
    p.add_argument("--input", required=True, help="volume basepath")
    p.add_argument("--slice", type=int, default=None, help="also export this slice as PGM")

    p = subs.add_parser("niqe-fit", help="fit the pristine quality model")
    _add_common(p)
    p.add_argument("--dataset", required=True, help="dataset directory (uses its train split)")

    p = subs.add_parser("eval", help="evaluate corrected test samples")
    _add_common(p)
    p.add_argument("--dataset", required=True, help="dataset directory (uses its test split)")
    p.add_argument("--weights", required=True, help="weights basepath")
    p.add_argument("--pristine", required=True, help="pristine model basepath")
    return parser


def _resolve(args, defaults: dict) -> dict:
    """CLI flag > config file > default, for the keys in `defaults`."""
    resolved = dict(defaults)
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        for key in defaults:
            if key in doc:
                resolved[key] = doc[key]
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _write_manifest(out_dir: Path, command: str, argv, resolved: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "command": command,
        "argv": list(argv),
        "resolved_config": {k: (list(v) if isinstance(v, tuple) else v)
                            for k, v in resolved.items()},
        "version": __version__,
    }
    (out_dir / "run_manifest.json").write_text(json.dumps(doc, indent=2) + "\n")


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise ValidationError(f"{what} not found: {path}")
    return path


def _cmd_phantom(args, argv) -> int:
    resolved = _resolve(args, {"seed": 0, "count": 1, "dims": (64, 64, 64)})
    out = Path(args.out_dir)
    _write_manifest(out, "phantom", argv, resolved)
    dims = tuple(resolved["dims"])
    if args.spec:
        spec = load_phantom_spec(_require(Path(args.spec), "spec file"))
        names = ["phantom_from_spec"]
        specs = [spec]
    elif args.standard:
        specs = [standard_spec()]
        names = ["phantom_standard"]
    else:
        specs, names = [], []
        for i in range(int(resolved["count"])):
            specs.append(random_spec(np.random.SeedSequence(resolved["seed"], spawn_key=(1, i))))
            names.append(f"phantom{i:03d}")
    for spec, name in zip(specs, names):
        save_phantom_spec(spec, out / f"{name}.spec.json")
        save_volume(generate(spec, dims, name=name), out / name)
        print(f"wrote {out / name}.json")
    return 0


def _cmd_corrupt(args, argv) -> int:
    resolved = _resolve(args, {"seed": 0, "max_translation": 5.0, "max_rotation": 5.0})
    out = Path(args.out_dir)
    _write_manifest(out, "corrupt", argv, resolved)
    v = load_volume(_require(Path(args.input + ".json"), "input volume").with_suffix(""))
    if args.trajectory:
        traj = load_trajectory(_require(Path(args.trajectory), "trajectory manifest"))
    else:
        traj = random_trajectory(
            resolved["seed"],
            TrajectoryConfig(n_pe=v.dims[v.pe_axis],
                             max_translation_mm=resolved["max_translation"],
                             max_rotation_deg=resolved["max_rotation"]))
        save_trajectory(traj, out / f"{v.name or 'volume'}.traj.json", seed=resolved["seed"])
    _, corrupted = corrupt(v, traj)
    name = f"{v.name or 'volume'}_corrupted"
    save_volume(corrupted.with_data(corrupted.data, name=name), out / name)
    print(f"wrote {out / name}.json")
    return 0


def _cmd_dataset(args, argv) -> int:
    resolved = _resolve(args, {"seed": 0, "train_phantoms": 20, "test_phantoms": 5,
                               "motions": 5, "dims": (64, 64, 64)})
    out = Path(args.out_dir)
    _write_manifest(out, "dataset", argv, resolved)
    cfg = DatasetConfig(dims=tuple(resolved["dims"]))
    train_m, test_m = build_dataset(
        int(resolved["train_phantoms"]), int(resolved["test_phantoms"]), out,
        motions_per_phantom=int(resolved["motions"]), seed=int(resolved["seed"]), config=cfg)
    print(f"train: {len(train_m.entries)} samples, test: {len(test_m.entries)} samples")
    return 0


def _cmd_train(args, argv) -> int:
    resolved = _resolve(args, {"seed": 0, "iterations": 2000, "batch_size": 4,
                               "learning_rate": 0.001, "levels": 3, "channels": (16, 32, 64)})
    out = Path(args.out_dir)
    _write_manifest(out, "train", argv, resolved)
    manifest = DatasetManifest.load(_require(Path(args.dataset) / "train", "train split"))
    net_cfg = nn.NetworkConfig(levels=int(resolved["levels"]),
                               channels=tuple(resolved["channels"]))
    train_cfg = nn.TrainConfig(learning_rate=float(resolved["learning_rate"]),
                               batch_size=int(resolved["batch_size"]),
                               iterations=int(resolved["iterations"]),
                               seed=int(resolved["seed"]))
    weights, loss_csv = run_training(manifest, net_cfg, train_cfg, out)
    print(f"wrote {weights}.json and {loss_csv}")
    return 0


def _cmd_correct(args, argv) -> int:
    resolved = _resolve(args, {"seed": 0})
    out = Path(args.out_dir)
    _write_manifest(out, "correct", argv, resolved)
    params = nn.load_weights(_require(Path(args.weights + ".json"), "weights").with_suffix(""))
    v = load_volume(_require(Path(args.input + ".json"), "input volume").with_suffix(""))
    mask = estimate_foreground(v)
    v_norm, record = normalize(v, mask)
    corrected = denormalize(correct_volume(params, v_norm), record, mask)
    name = f"{v.name or 'volume'}_corrected"
    save_volume(corrected.with_data(corrected.data, name=name), out / name)
    print(f"wrote {out / name}.json")
    if args.slice is not None:
        img = extract_slice(corrected, 2, args.slice)
        write_pgm16(img, out / f"{name}_s{args.slice:03d}.pgm")
        print(f"wrote {out / name}_s{args.slice:03d}.pgm")
    return 0


def _cmd_niqe_fit(args, argv) -> int:
    resolved = _resolve(args, {"seed": 0})
    out = Path(args.out_dir)
    _write_manifest(out, "niqe-fit", argv, resolved)
    manifest = DatasetManifest.load(_require(Path(args.dataset) / "train", "train split"))
    model = fit_pristine_model(manifest)
    metrics.save_mvg(model, out / "pristine")
    print(f"wrote {out / 'pristine'}.json ({model.patch_count} patches)")
    return 0


def _cmd_eval(args, argv) -> int:
    resolved = _resolve(args, {"seed": 0})
    out = Path(args.out_dir)
    _write_manifest(out, "eval", argv, resolved)
    manifest = DatasetManifest.load(_require(Path(args.dataset) / "test", "test split"))
    _require(Path(args.weights + ".json"), "weights")
    pristine = metrics.load_mvg(_require(Path(args.pristine + ".json"), "pristine model").with_suffix(""))
    report = run_evaluation(manifest, args.weights, pristine, out)
    agg = report.aggregates
    print(f"wrote {out / 'report.csv'} ({len(report.rows)} samples, "
          f"{len(report.failures)} NIQE failures)")
    print(f"volume error before/after: {agg['volume_error_before']['mean']:.3f} / "
          f"{agg['volume_error_after']['mean']:.3f}")
    return 0


_COMMANDS = {
    "phantom": _cmd_phantom,
    "corrupt": _cmd_corrupt,
    "dataset": _cmd_dataset,
    "train": _cmd_train,
    "correct": _cmd_correct,
    "niqe-fit": _cmd_niqe_fit,
    "eval": _cmd_eval,
}


def dispatch(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version paths
        return 0 if exc.code in (0, None) else 1
    try:
        return _COMMANDS[args.command](args, argv)
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except MrimotionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    return dispatch(sys.argv[1:] if argv is None else list(argv))


if __name__ == "__main__":
    sys.exit(main())
