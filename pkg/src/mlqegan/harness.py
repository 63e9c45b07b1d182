"""Evaluation over manifests, the scarcity sweep, and report emission."""

from __future__ import annotations

import copy
import csv
import json
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .core import RawPair, RunConfig, derive_seed, save_config, validate_config
from .data import check_disjoint, load_pairs, read_manifest
from .metrics import COLOR_HANDLING, aggregate, metric_triple
from .trainer import LevelStreams, TrainState, train, train_qegan_baseline

log = logging.getLogger(__name__)

METHODS = ("qegan", "mlqegan")
METRICS = ("rrmse", "ms_ssim", "qilv")
TASKS = {
    "sr4": dict(levels=2, smoke=False),
    "sr8": dict(levels=3, smoke=False),
    "sr4+smoke": dict(levels=2, smoke=True),
    "sr8+smoke": dict(levels=3, smoke=True),
}


def apply_task(cfg: RunConfig, task: str) -> RunConfig:
    """Reshape a config for a named task; capacity lists are re-derived for the level count."""
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; choose from {sorted(TASKS)}")
    spec = TASKS[task]
    cfg = copy.deepcopy(cfg)
    if cfg.levels != spec["levels"]:
        cfg.levels = spec["levels"]
        cfg.per_level_scale, cfg.lambda_, cfg.alpha = [], [], []
        cfg.dataset.level_counts = []
        cfg.capacity.gen_blocks, cfg.capacity.gen_channels = [], []
        cfg.capacity.disc_blocks, cfg.capacity.disc_channels = [], []
    cfg.dataset.smoke = spec["smoke"]
    return validate_config(cfg)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def enhance(model: torch.nn.Module, lows: Sequence[np.ndarray], batch_size: int = 32) -> list[np.ndarray]:
    """Run the full generator chain in eval mode; returns float64 images."""
    model.eval()
    dtype = next(model.parameters()).dtype
    outs = []
    with torch.no_grad():
        for i in range(0, len(lows), batch_size):
            x = torch.as_tensor(np.stack(lows[i:i + batch_size]), dtype=dtype)
            outs.extend(model(x).double().numpy())
    return outs


def evaluate_pairs(model, pairs: Sequence[RawPair]) -> list[dict]:
    preds = enhance(model, [p.low for p in pairs])
    rows = []
    for pred, p in zip(preds, pairs):
        if pred.shape != p.high.shape:
            raise ValueError(f"{p.id}: output {pred.shape} vs truth {p.high.shape}")
        r, m, q = metric_triple(pred, p.high)
        rows.append({"id": p.id, "rrmse": r, "ms_ssim": m, "qilv": q})
    return rows


def summarize(rows: Sequence[dict]) -> dict:
    agg = aggregate([(r["rrmse"], r["ms_ssim"], r["qilv"]) for r in rows])
    agg["n"] = len(rows)
    agg["color_handling"] = COLOR_HANDLING
    return agg


def write_metrics_csv(rows: Sequence[dict], agg: dict, path: str | Path) -> None:
    """Per-image rows followed by one ``mean`` row; std and metadata go to a JSON sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["id", *METRICS])
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{r[k]:.6g}" if k != "id" else r[k]) for k in w.fieldnames})
        w.writerow({"id": "mean", **{m: f"{agg[m + '_mean']:.6g}" for m in METRICS}})
    path.with_suffix(".json").write_text(json.dumps(agg, indent=2, sort_keys=True))


def evaluate_manifest(model, manifest: str | Path, out_csv: str | Path | None = None,
                      role: str = "test") -> tuple[list[dict], dict]:
    pairs = load_pairs(manifest, role=role)
    if not pairs:
        raise ValueError(f"no {role} pairs in {manifest}")
    rows = evaluate_pairs(model, pairs)
    agg = summarize(rows)
    if out_csv:
        write_metrics_csv(rows, agg, out_csv)
    return rows, agg


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


@dataclass
class SweepSpec:
    high_counts: list[int] = field(default_factory=lambda: [8, 32, 128])
    mid_count: int = 512
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    task: str = "sr4"

    def __post_init__(self):
        if not self.high_counts or list(self.high_counts) != sorted(self.high_counts):
            raise ValueError("high_counts must be non-empty and ascending")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")


def select_high_ids(pool: Sequence[str], count: int, seed: int) -> list[str]:
    """Seeded subset of the highest-quality training pool for one sweep cell."""
    if count > len(pool):
        raise ValueError(f"high_count {count} exceeds pool of {len(pool)}")
    rng = np.random.default_rng(derive_seed(seed, "subset", count))
    return sorted(pool[i] for i in rng.choice(len(pool), size=count, replace=False))


def _cell_name(method: str, count: int, seed: int) -> str:
    return f"{method}_n{count}_s{seed}"


def run_cell(method: str, count: int, seed: int, spec: SweepSpec, cfg: RunConfig, data_dir: Path,
             out_dir: Path, test_pairs: Sequence[RawPair] | None = None) -> dict:
    """Train and evaluate one sweep cell; skipped when its result file already exists."""
    cell = out_dir / "cells" / _cell_name(method, count, seed)
    result_path = cell / "result.json"
    if result_path.exists():
        return json.loads(result_path.read_text())
    cell.mkdir(parents=True, exist_ok=True)

    records = read_manifest(data_dir)
    top = cfg.levels + 1
    pool = [r["id"] for r in records if r["role"] == "train" and r["level_j"] == top]
    mids = [r["id"] for r in records if r["role"] == "train" and r["level_j"] < top]
    eval_ids = [r["id"] for r in records if r["role"] in ("val", "test")]
    if len(mids) < spec.mid_count * (cfg.levels - 1):
        raise ValueError(f"dataset has {len(mids)} mid-level pairs, sweep needs {spec.mid_count} per level")
    high_ids = select_high_ids(pool, count, seed)
    train_ids = high_ids
    if method == "mlqegan":
        per_level: dict[int, list[str]] = {}
        for r in records:
            if r["role"] == "train" and r["level_j"] < top:
                per_level.setdefault(r["level_j"], []).append(r["id"])
        train_ids = high_ids + [i for ids in per_level.values() for i in ids[:spec.mid_count]]
    check_disjoint(train_ids, eval_ids)

    cell_cfg = copy.deepcopy(cfg)
    cell_cfg.seed = seed
    pairs = load_pairs(data_dir, role="train", ids=train_ids)
    if method == "qegan":
        state = train_qegan_baseline(pairs, cell_cfg, out_dir=cell)
    else:
        state = train(cell_cfg, LevelStreams.from_pairs(pairs, cell_cfg), out_dir=cell)

    if test_pairs is None:
        test_pairs = load_pairs(data_dir, role="test")
    rows = evaluate_pairs(state.model, test_pairs)
    agg = summarize(rows)
    write_metrics_csv(rows, agg, cell / "metrics.csv")
    result = {"method": method, "high_count": count, "seed": seed,
              "test_ids_digest": derive_seed(*sorted(p.id for p in test_pairs)),
              "n_train": len(train_ids), "steps": state.step,
              **{f"{m}_mean": agg[f"{m}_mean"] for m in METRICS},
              **{f"{m}_std": agg[f"{m}_std"] for m in METRICS}}
    result_path.write_text(json.dumps(result, indent=2, sort_keys=True))
    return result


def run_sweep(spec: SweepSpec, cfg: RunConfig, data_dir: str | Path, out_dir: str | Path) -> list[dict]:
    """Every (high_count, seed) cell for both methods; completed cells are reused."""
    data_dir, out_dir = Path(data_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out_dir / "config.toml")
    (out_dir / "sweep.json").write_text(json.dumps(spec.__dict__, indent=2))
    test_pairs = load_pairs(data_dir, role="test")
    results = []
    for count in spec.high_counts:
        for seed in spec.seeds:
            for method in METHODS:
                log.info("sweep cell %s", _cell_name(method, count, seed))
                results.append(run_cell(method, count, seed, spec, cfg, data_dir, out_dir, test_pairs))
    write_results(results, out_dir / "sweep_results.csv")
    return results


RESULT_COLUMNS = ["method", "high_count", "seed", *(f"{m}_{s}" for m in METRICS for s in ("mean", "std"))]


def write_results(results: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for r in results:
            w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})


def read_results(path: str | Path) -> list[dict]:
    path = Path(path)
    if path.is_dir():
        path = path / "sweep_results.csv"
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["high_count"], r["seed"] = int(r["high_count"]), int(r["seed"])
        for k in RESULT_COLUMNS[3:]:
            r[k] = float(r[k])
    return rows


def seed_statistics(results: Sequence[dict]) -> list[dict]:
    """Mean and sample std across seeds of each cell's mean metrics, per (method, high_count)."""
    groups: dict[tuple[str, int], list[dict]] = {}
    for r in results:
        groups.setdefault((r["method"], r["high_count"]), []).append(r)
    out = []
    for (method, count), rows in sorted(groups.items()):
        entry = {"method": method, "high_count": count, "n_seeds": len(rows)}
        for m in METRICS:
            vals = np.array([r[f"{m}_mean"] for r in rows])
            entry[f"{m}_mean"] = float(vals.mean())
            entry[f"{m}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        out.append(entry)
    return out


def cmd_report(results: Sequence[dict], out_dir: str | Path) -> list[Path]:
    """Summary CSV (grid rows then across-seed aggregate rows) and one error-bar plot per metric."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not results:
        raise ValueError("no sweep results to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stats = seed_statistics(results)

    summary = out / "summary.csv"
    with open(summary, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["kind", *RESULT_COLUMNS], extrasaction="ignore")
        w.writeheader()
        for r in sorted(results, key=lambda r: (r["method"], r["high_count"], r["seed"])):
            w.writerow({"kind": "cell", **{k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()}})
        for s in stats:
            w.writerow({"kind": "aggregate", "seed": "all",
                        **{k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in s.items()}})

    files = [summary]
    labels = {"qegan": "QEGAN (single level)", "mlqegan": "MLQEGAN (multilevel)"}
    for m in METRICS:
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        for method in METHODS:
            rows = [s for s in stats if s["method"] == method]
            if not rows:
                continue
            ax.errorbar([s["high_count"] for s in rows], [s[f"{m}_mean"] for s in rows],
                        yerr=[s[f"{m}_std"] for s in rows], marker="o", capsize=3, label=labels[method])
        ax.set_xscale("log", base=2)
        ax.set_xlabel("highest-quality training pairs")
        ax.set_ylabel(m)
        ax.legend()
        fig.tight_layout()
        path = out / f"{m}.png"
        fig.savefig(path, dpi=100, metadata={"Software": None})
        plt.close(fig)
        files.append(path)
    return files


def load_model_state(path: str | Path, cfg: RunConfig | None = None, force: bool = False) -> TrainState:
    from .trainer import load_checkpoint

    return load_checkpoint(path, cfg, force=force)
