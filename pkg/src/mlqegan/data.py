"""On-disk datasets: PNG images plus a JSON-lines manifest.

Manifest records (one per pair)::

    {"id": "train-2-00017", "role": "train", "level_j": 2,
     "low_path": "low/train-2-00017.png", "high_path": "high/train-2-00017.png",
     "smoke_params": null | {...}, "seed": 123456}

Paths are relative to the manifest's directory.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Sequence
from dataclasses import asdict
from pathlib import Path

import numpy as np
from PIL import Image

from .core import RawPair, RunConfig, derive_seed, from_unit_range, to_unit_range
from .degrade import SmokeParams, extract_patches, make_pair_from_full, synth_texture_image

MANIFEST_NAME = "manifest.jsonl"
ROLES = ("train", "val", "test")


def write_png(path: str | Path, img: np.ndarray) -> None:
    arr = from_unit_range(img, 8)
    if arr.shape[0] == 1:
        Image.fromarray(arr[0], mode="L").save(path)
    else:
        Image.fromarray(np.ascontiguousarray(arr.transpose(1, 2, 0)), mode="RGB").save(path)


def read_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = arr[..., :3].transpose(2, 0, 1)
    return to_unit_range(arr, 8)


def load_source_images(folder: str | Path, channels: int = 3) -> list[np.ndarray]:
    paths = sorted(p for p in Path(folder).iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".tif"))
    images = []
    for p in paths:
        img = read_png(p)
        if channels == 3 and img.shape[0] == 1:
            img = np.repeat(img, 3, axis=0)
        images.append(img)
    return images


def _plan(cfg: RunConfig) -> list[tuple[str, int, int]]:
    """(role, level_j, index) for every pair, test and val first so they never depend on train counts."""
    top = cfg.levels + 1
    ds = cfg.dataset
    plan = [("test", top, i) for i in range(ds.test_count)]
    plan += [("val", top, i) for i in range(ds.val_count)]
    for j, n in zip(range(2, top + 1), ds.level_counts):
        plan += [("train", j, i) for i in range(n)]
    return plan


def patch_stream(sources: Iterable[np.ndarray], size: int, seed: int) -> Iterable[np.ndarray]:
    """All non-overlapping ``size`` patches of each source in seeded random order."""
    for k, src in enumerate(sources):
        h, w = src.shape[-2:]
        cells = (h // size) * (w // size)
        if cells == 0:
            continue
        yield from extract_patches(src, size, cells, non_overlapping=True, seed=derive_seed(seed, "patches", k))


def synthetic_sources(cfg: RunConfig) -> Iterable[np.ndarray]:
    k = 0
    while True:
        yield synth_texture_image(derive_seed(cfg.seed, "source", k) % 2**32, cfg.dataset.source_size,
                                  cfg.dataset.source_size)
        k += 1


def prepare_pairs(sources: Iterable[np.ndarray], cfg: RunConfig, out_dir: str | Path) -> list[dict]:
    """Cut full-resolution patches from ``sources`` and write every planned pair plus the manifest."""
    out = Path(out_dir)
    (out / "low").mkdir(parents=True, exist_ok=True)
    (out / "high").mkdir(parents=True, exist_ok=True)
    full_size_h = cfg.dataset.base_h * cfg.total_scale
    full_size_w = cfg.dataset.base_w * cfg.total_scale
    if full_size_h != full_size_w:
        raise ValueError("pair preparation expects square patches")
    plan = _plan(cfg)
    patches = patch_stream(sources, full_size_h, cfg.seed)
    records = []
    for role, j, i in plan:
        try:
            patch = next(patches)
        except StopIteration:
            raise ValueError(f"source images exhausted after {len(records)} of {len(plan)} pairs") from None
        if cfg.image_channels == 1 and patch.shape[0] == 3:
            patch = patch.mean(axis=0, keepdims=True)
        pid = f"{role}-{j}-{i:05d}"
        item_seed = derive_seed(cfg.seed, pid) % 2**32
        smoke = SmokeParams.from_config(cfg, item_seed) if cfg.dataset.smoke else None
        pair = make_pair_from_full(patch, j, cfg, smoke, id=pid)
        rec = {
            "id": pid,
            "role": role,
            "level_j": j,
            "low_path": f"low/{pid}.png",
            "high_path": f"high/{pid}.png",
            "smoke_params": asdict(smoke) if smoke else None,
            "seed": item_seed,
        }
        write_png(out / rec["low_path"], pair.low)
        write_png(out / rec["high_path"], pair.high)
        records.append(rec)
    write_manifest(records, out / MANIFEST_NAME)
    return records


def synth_data(cfg: RunConfig, out_dir: str | Path) -> list[dict]:
    return prepare_pairs(synthetic_sources(cfg), cfg, out_dir)


def write_manifest(records: Sequence[dict], path: str | Path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_manifest(path: str | Path) -> list[dict]:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_pairs(manifest: str | Path, role: str | None = None, ids: Iterable[str] | None = None) -> list[RawPair]:
    path = Path(manifest)
    root = path if path.is_dir() else path.parent
    keep = set(ids) if ids is not None else None
    pairs = []
    for rec in read_manifest(path):
        if role is not None and rec["role"] != role:
            continue
        if keep is not None and rec["id"] not in keep:
            continue
        pairs.append(RawPair(read_png(root / rec["low_path"]), read_png(root / rec["high_path"]),
                             rec["level_j"], rec["id"]))
    return pairs


def check_disjoint(train_ids: Iterable[str], other_ids: Iterable[str]) -> None:
    shared = set(train_ids) & set(other_ids)
    if shared:
        raise ValueError(f"{len(shared)} evaluation ids leaked into training, e.g. {sorted(shared)[0]}")
