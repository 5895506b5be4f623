"""Dataset construction, training orchestration, and evaluation reports.

Corruption happens in 3D; learning happens on 2D (pe, ro) planes cut along
the slice axis.  Every artifact is written to disk and anything derived
(foreground masks, normalization records, slice pairs) is computed from the
reloaded float32 files rather than the in-memory float64 originals, so any
later stage that reloads the same files reproduces the recorded values
bit-exactly.

Seed scheme: phantom p draws from SeedSequence(master, spawn_key=(1, p)),
trajectory m of phantom p from spawn_key=(2, p, m), with p counted globally
across the train and test splits.  Adding phantoms or motions never
reshuffles existing ones.

Slices with under 5% foreground are excluded everywhere; the training pair
list is additionally capped per sample (evenly spaced) to keep desk-scale
epochs small, while evaluation and NIQE pooling use the full slice list.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics, nn
from .errors import FitError, MrimotionError, ValidationError
from .motion import (
    TrajectoryConfig,
    load_trajectory,
    random_trajectory,
    save_trajectory,
    trajectory_stats,
    corrupt,
)
from .phantom import PhantomConfig, generate, random_spec, save_phantom_spec
from .preprocess import ForegroundConfig, ForegroundMask, estimate_foreground, normalize, denormalize
from .volume import Image2D, Volume, load_volume, save_volume, write_pgm16

SLICE_AXIS = 2  # slices are (pe, ro) planes

# Desk-scale quality-model settings: 64x64 slices tile into only 16 disjoint
# patches, so windows overlap at half-patch stride and the sharpness gate is
# relaxed from the generic 0.75 default; otherwise small phantoms cannot
# support a stable feature-cloud fit.  The pristine model and the per-sample
# models must always share one config.
PIPELINE_NIQE = metrics.NiqeConfig(patch_stride=8, sharpness_fraction=0.25)


@dataclass(frozen=True)
class DatasetConfig:
    dims: tuple[int, int, int] = (64, 64, 64)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    max_translation_mm: float = 5.0
    max_rotation_deg: float = 5.0
    min_foreground_share: float = 0.05
    max_train_slices: int = 16
    foreground: ForegroundConfig = field(default_factory=ForegroundConfig)
    phantom: PhantomConfig = field(default_factory=PhantomConfig)

    def __post_init__(self):
        if any(d % 2 for d in self.dims):
            raise ValidationError(f"dims must be even for pooling levels, got {self.dims}")
        if not (0 < self.min_foreground_share < 1):
            raise ValidationError("min_foreground_share must be in (0, 1)")
        if self.max_train_slices < 1:
            raise ValidationError("max_train_slices must be >= 1")


@dataclass
class DatasetManifest:
    """One split's artifact index; paths are relative to `root`."""

    split: str
    root: Path
    doc: dict

    @property
    def phantoms(self) -> list[dict]:
        return self.doc["phantoms"]

    @property
    def entries(self) -> list[dict]:
        return self.doc["entries"]

    def path(self, rel: str) -> Path:
        return self.root / rel

    def save(self) -> Path:
        out = self.root / "dataset.json"
        out.write_text(json.dumps(self.doc, indent=2) + "\n")
        return out

    @classmethod
    def load(cls, root) -> "DatasetManifest":
        root = Path(root)
        doc = json.loads((root / "dataset.json").read_text())
        return cls(doc["split"], root, doc)


def _slice_lists(mask: ForegroundMask, cfg: DatasetConfig):
    """(all usable slice indices, capped training subset), by foreground share."""
    m = mask.bool_array
    shares = m.mean(axis=(0, 1))
    usable = [int(k) for k in range(m.shape[SLICE_AXIS])
              if shares[k] >= cfg.min_foreground_share]
    if len(usable) <= cfg.max_train_slices:
        return usable, list(usable)
    pick = np.unique(np.linspace(0, len(usable) - 1, cfg.max_train_slices).round().astype(int))
    return usable, [usable[i] for i in pick]


def _stack_slices(v: Volume, indices, name) -> Volume:
    data = np.stack([v.data[:, :, k] for k in indices], axis=2)
    return Volume(data, spacing=v.spacing, axis_labels=v.axis_labels, name=name)


def build_dataset(n_train_phantoms: int, n_test_phantoms: int, out_dir,
                  motions_per_phantom: int = 5, seed: int = 0,
                  config: DatasetConfig = DatasetConfig()):
    """Generate both splits; returns (train manifest, test manifest)."""
    if n_train_phantoms < 1 or n_test_phantoms < 1 or motions_per_phantom < 1:
        raise ValidationError("phantom and motion counts must be >= 1")
    out_dir = Path(out_dir)
    manifests = []
    phantom_id = 0
    for split, count in (("train", n_train_phantoms), ("test", n_test_phantoms)):
        root = out_dir / split
        for sub in ("phantoms", "samples", "pairs"):
            (root / sub).mkdir(parents=True, exist_ok=True)
        doc = {
            "split": split,
            "seed": seed,
            "dims": list(config.dims),
            "spacing": list(config.spacing),
            "slice_axis": SLICE_AXIS,
            "min_foreground_share": config.min_foreground_share,
            "max_train_slices": config.max_train_slices,
            "foreground": {"fraction": config.foreground.fraction,
                           "iterations": config.foreground.iterations},
            "bounds": {"max_translation_mm": config.max_translation_mm,
                       "max_rotation_deg": config.max_rotation_deg},
            "phantoms": [],
            "entries": [],
        }
        for _ in range(count):
            p = phantom_id
            pid = f"p{p:03d}"
            spec = random_spec(np.random.SeedSequence(seed, spawn_key=(1, p)), config.phantom)
            save_phantom_spec(spec, root / "phantoms" / f"{pid}.spec.json")
            clean = generate(spec, config.dims, spacing=config.spacing, name=pid)
            save_volume(clean, root / "phantoms" / pid)
            clean = load_volume(root / "phantoms" / pid)

            mask = estimate_foreground(clean, config.foreground)
            clean_norm, clean_rec = normalize(clean, mask)
            eval_slices, train_slices = _slice_lists(mask, config)
            if not train_slices:
                raise ValidationError(f"phantom {pid}: no slice reaches "
                                      f"{config.min_foreground_share:.0%} foreground")
            target = _stack_slices(clean_norm, train_slices, f"{pid}_target")
            save_volume(target, root / "pairs" / f"{pid}_target")
            doc["phantoms"].append({
                "id": pid,
                "spec_file": f"phantoms/{pid}.spec.json",
                "volume": f"phantoms/{pid}",
                "target_stack": f"pairs/{pid}_target",
                "normalization": clean_rec.as_dict(),
                "train_slices": train_slices,
                "eval_slices": eval_slices,
            })

            for m in range(motions_per_phantom):
                sid = f"{pid}m{m}"
                traj = random_trajectory(
                    np.random.SeedSequence(seed, spawn_key=(2, p, m)),
                    TrajectoryConfig(n_pe=config.dims[0],
                                     max_translation_mm=config.max_translation_mm,
                                     max_rotation_deg=config.max_rotation_deg))
                save_trajectory(traj, root / "samples" / f"{sid}.traj.json", seed=seed)
                _, corrupted = corrupt(clean, traj)
                save_volume(corrupted.with_data(corrupted.data, name=sid),
                            root / "samples" / sid)
                corrupted = load_volume(root / "samples" / sid)
                cor_norm, cor_rec = normalize(corrupted, mask)
                stack = _stack_slices(cor_norm, train_slices, f"{sid}_input")
                save_volume(stack, root / "pairs" / f"{sid}_input")
                doc["entries"].append({
                    "sample": sid,
                    "phantom_id": pid,
                    "trajectory": f"samples/{sid}.traj.json",
                    "corrupted_volume": f"samples/{sid}",
                    "input_stack": f"pairs/{sid}_input",
                    "normalization": cor_rec.as_dict(),
                })
            phantom_id += 1
        manifest = DatasetManifest(split, root, doc)
        manifest.save()
        manifests.append(manifest)
    return tuple(manifests)


def training_pairs(manifest: DatasetManifest):
    """(corrupted, clean) slice pairs in manifest order."""
    targets = {ph["id"]: load_volume(manifest.path(ph["target_stack"]))
               for ph in manifest.phantoms}
    pairs = []
    for entry in manifest.entries:
        stack = load_volume(manifest.path(entry["input_stack"]))
        target = targets[entry["phantom_id"]]
        for k in range(stack.dims[SLICE_AXIS]):
            pairs.append((stack.data[:, :, k], target.data[:, :, k]))
    return pairs


def run_training(manifest: DatasetManifest, net_cfg: nn.NetworkConfig,
                 train_cfg: nn.TrainConfig, out_dir):
    """Train on a split's pairs; persists weights and the loss history."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = training_pairs(manifest)
    params, history = nn.train(pairs, net_cfg, train_cfg)
    nn.save_weights(params, out_dir / "weights")
    nn.save_loss_csv(history, out_dir / "loss.csv")
    return out_dir / "weights", out_dir / "loss.csv"


def correct_volume(params: nn.NetworkParameters, v: Volume, batch: int = 8) -> Volume:
    """Infer-mode correction of every (pe, ro) plane of a volume."""
    n_slices = v.dims[SLICE_AXIS]
    planes = np.moveaxis(v.data, SLICE_AXIS, 0)[:, None]  # (S, 1, pe, ro)
    out = np.empty_like(planes)
    for start in range(0, n_slices, batch):
        chunk = planes[start:start + batch]
        out[start:start + batch], _, _ = nn.forward(params, chunk, mode="infer")
    return v.with_data(np.moveaxis(out[:, 0], 0, SLICE_AXIS))


def fit_pristine_model(manifest: DatasetManifest,
                       niqe_cfg: metrics.NiqeConfig = PIPELINE_NIQE,
                       corpus_id: str = "") -> metrics.MvgModel:
    """Pristine feature model from the split's motion-free slices."""
    planes, mask_planes = [], []
    fg_cfg = _foreground_config(manifest)
    for ph in manifest.phantoms:
        clean = load_volume(manifest.path(ph["volume"]))
        mask = estimate_foreground(clean, fg_cfg)
        for k in ph["eval_slices"]:
            planes.append(clean.data[:, :, k])
            mask_planes.append(mask.data[:, :, k])
    pooled = _sample_features(planes, mask_planes, niqe_cfg)
    if pooled is None:
        raise FitError("no usable NIQE patches in the pristine corpus")
    return metrics.fit_mvg(pooled, corpus_id=corpus_id or f"{manifest.split}-pristine")


def _foreground_config(manifest: DatasetManifest) -> ForegroundConfig:
    fg = manifest.doc["foreground"]
    return ForegroundConfig(fraction=fg["fraction"], iterations=fg["iterations"])


def _sample_features(planes, mask_planes, cfg: metrics.NiqeConfig,
                     min_rows: int | None = None):
    """Pooled patch features over one sample's slices.

    Gated patches (sharpness and foreground) form the pool; when a sample
    is too flat to yield enough of them for a covariance fit, the sharpest
    remaining foreground-eligible patches top the pool up to min_rows
    (default: the 2-rows-per-dimension floor of fit_mvg).  Returns None
    when no patch fits at all.
    """
    feats, sharps, sels = [], [], []
    for plane, mask_plane in zip(planes, mask_planes):
        try:
            f, s, g = metrics._patch_table(plane * (mask_plane > 0), cfg,
                                           foreground=mask_plane)
        except MrimotionError:
            continue
        feats.append(f)
        sharps.append(s)
        sels.append(g)
    if not feats:
        return None
    feats = np.concatenate(feats)
    if feats.shape[0] == 0:
        return None
    sharp = np.concatenate(sharps)
    sel = np.concatenate(sels)
    if min_rows is None:
        min_rows = 2 * feats.shape[1]
    n_sel = int(sel.sum())
    if n_sel >= min_rows:
        return feats[sel]
    pool = np.flatnonzero(~sel)
    extra = pool[np.argsort(-sharp[pool], kind="stable")][:min_rows - n_sel]
    keep = np.sort(np.concatenate([np.flatnonzero(sel), extra]))
    return feats[keep]


@dataclass
class EvaluationReport:
    rows: list[dict]
    aggregates: dict          # column -> {"mean": x, "std": x}
    failures: list[str]

    COLUMNS = (
        "sample", "mean_abs_translation_mm", "mean_abs_rotation_deg",
        "mean_center_distance", "slice_error_before", "slice_error_after",
        "volume_error_before", "volume_error_after",
        "niqe_before", "niqe_after", "identity_only",
    )

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [",".join(self.COLUMNS)]
        for row in self.rows:
            lines.append(",".join(_cell(row[c]) for c in self.COLUMNS))
        for label in ("mean", "std"):
            cells = [label]
            for c in self.COLUMNS[1:-1]:
                cells.append(_cell(self.aggregates[c][label]))
            cells.append("")
            lines.append(",".join(cells))
        path.write_text("\n".join(lines) + "\n")
        return path


def _cell(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def run_evaluation(manifest: DatasetManifest, weights_basepath, pristine: metrics.MvgModel,
                   out_dir, niqe_cfg: metrics.NiqeConfig = PIPELINE_NIQE) -> EvaluationReport:
    """Correct every sample, measure errors and NIQE, write the reports.

    Rows are sorted ascending by mean center distance of the motion events
    (sample id breaks ties); aggregate mean and population-std rows follow.
    Per-sample NIQE failures are listed and leave nan in the NIQE columns.
    """
    out_dir = Path(out_dir)
    (out_dir / "error_images").mkdir(parents=True, exist_ok=True)
    params = nn.load_weights(weights_basepath)
    fg_cfg = _foreground_config(manifest)

    phantom_cache = {}
    for ph in manifest.phantoms:
        clean = load_volume(manifest.path(ph["volume"]))
        phantom_cache[ph["id"]] = (ph, clean, estimate_foreground(clean, fg_cfg))

    rows, failures = [], []
    score_rows = []
    for entry in manifest.entries:
        sid = entry["sample"]
        ph, clean, mask = phantom_cache[entry["phantom_id"]]
        corrupted = load_volume(manifest.path(entry["corrupted_volume"]))
        traj = load_trajectory(manifest.path(entry["trajectory"]))
        stats = trajectory_stats(traj)

        cor_norm, cor_rec = normalize(corrupted, mask)
        corrected = denormalize(correct_volume(params, cor_norm), cor_rec, mask)

        fg3 = mask.bool_array
        masked_corrupted = corrupted.data * fg3
        row = {
            "sample": sid,
            "mean_abs_translation_mm": stats.mean_abs_translation,
            "mean_abs_rotation_deg": stats.mean_abs_rotation,
            "mean_center_distance": stats.mean_center_distance,
            "volume_error_before": metrics.percentage_error(masked_corrupted, clean, mask),
            "volume_error_after": metrics.percentage_error(corrected, clean, mask),
            "identity_only": all(e.pose.is_identity for e in traj.events),
        }

        slice_before, slice_after = [], []
        for k in ph["eval_slices"]:
            mk = mask.data[:, :, k]
            slice_before.append(metrics.percentage_error(
                masked_corrupted[:, :, k], clean.data[:, :, k], mk))
            slice_after.append(metrics.percentage_error(
                corrected.data[:, :, k], clean.data[:, :, k], mk))
        row["slice_error_before"] = float(np.mean(slice_before))
        row["slice_error_after"] = float(np.mean(slice_after))

        mask_planes = [mask.data[:, :, k] for k in ph["eval_slices"]]
        feat_before = _sample_features(
            [masked_corrupted[:, :, k] for k in ph["eval_slices"]], mask_planes, niqe_cfg)
        feat_after = _sample_features(
            [corrected.data[:, :, k] for k in ph["eval_slices"]], mask_planes, niqe_cfg)
        try:
            if feat_before is None or feat_after is None:
                raise FitError("no usable NIQE patches")
            row["niqe_before"] = metrics.niqe_score(
                metrics.fit_mvg(feat_before, corpus_id=f"{sid}-before"), pristine)
            row["niqe_after"] = metrics.niqe_score(
                metrics.fit_mvg(feat_after, corpus_id=f"{sid}-after"), pristine)
            score_rows.append((sid, row["niqe_before"], row["niqe_after"]))
        except MrimotionError as exc:
            row["niqe_before"] = float("nan")
            row["niqe_after"] = float("nan")
            failures.append(f"{sid}: {exc}")

        mid = ph["eval_slices"][len(ph["eval_slices"]) // 2]
        err_img = Image2D(np.abs(corrected.data[:, :, mid] - clean.data[:, :, mid]),
                          provenance=(sid, SLICE_AXIS, mid))
        write_pgm16(err_img, out_dir / "error_images" / f"{sid}_s{mid:03d}.pgm")
        rows.append(row)

    rows.sort(key=lambda r: (r["mean_center_distance"], r["sample"]))
    aggregates = {}
    for c in EvaluationReport.COLUMNS[1:-1]:
        vals = np.array([r[c] for r in rows], dtype=np.float64)
        finite = vals[np.isfinite(vals)]
        aggregates[c] = {"mean": float(finite.mean()) if finite.size else float("nan"),
                         "std": float(finite.std()) if finite.size else float("nan")}

    report = EvaluationReport(rows, aggregates, failures)
    report.to_csv(out_dir / "report.csv")
    if score_rows:
        metrics.write_scores_csv(score_rows, out_dir / "scores.csv")
    if failures:
        (out_dir / "failures.txt").write_text("\n".join(failures) + "\n")
    return report
