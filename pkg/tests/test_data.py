import numpy as np
import pytest

from mlqegan.data import (
    MANIFEST_NAME,
    check_disjoint,
    load_pairs,
    load_source_images,
    prepare_pairs,
    read_manifest,
    read_png,
    synth_data,
    write_png,
)

from conftest import tiny_config


def test_png_round_trip_within_quantization(tmp_path):
    rng = np.random.default_rng(0)
    for shape in ((3, 5, 7), (1, 4, 4)):
        img = rng.random(shape)
        write_png(tmp_path / "x.png", img)
        back = read_png(tmp_path / "x.png")
        assert back.shape == shape
        assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12


def test_synth_data_layout(tmp_path):
    cfg = tiny_config(levels=2)
    recs = synth_data(cfg, tmp_path)
    assert (tmp_path / MANIFEST_NAME).exists()
    assert recs == read_manifest(tmp_path)
    roles = [r["role"] for r in recs]
    assert roles.count("test") == 3 and roles.count("val") == 2 and roles.count("train") == 12
    assert {r["level_j"] for r in recs if r["role"] != "train"} == {3}
    assert len({r["id"] for r in recs}) == len(recs)
    pairs = load_pairs(tmp_path, role="train")
    for p in pairs:
        assert p.low.shape == (3, 4, 4)
        assert p.high.shape == (3, 4 * cfg.resolution_scale(p.level_j), 4 * cfg.resolution_scale(p.level_j))


def test_synth_data_is_deterministic(tmp_path):
    cfg = tiny_config(levels=2)
    synth_data(cfg, tmp_path / "a")
    synth_data(cfg, tmp_path / "b")
    for rec in read_manifest(tmp_path / "a"):
        assert (tmp_path / "a" / rec["high_path"]).read_bytes() == (tmp_path / "b" / rec["high_path"]).read_bytes()


def test_smoke_parameters_recorded(tmp_path):
    cfg = tiny_config(levels=1)
    cfg.dataset.smoke = True
    recs = synth_data(cfg, tmp_path)
    assert all(r["smoke_params"]["seed"] == r["seed"] for r in recs)


def test_prepare_pairs_from_folder(tmp_path):
    cfg = tiny_config(levels=1)
    src = tmp_path / "src"
    src.mkdir()
    rng = np.random.default_rng(1)
    for k in range(2):
        write_png(src / f"{k}.png", rng.random((1, 40, 40)))
    images = load_source_images(src, 3)
    assert images[0].shape == (3, 40, 40)
    recs = prepare_pairs(images, cfg, tmp_path / "out")
    assert len(recs) == 6 + 2 + 3
    with pytest.raises(ValueError):
        prepare_pairs(images[:1], tiny_config(levels=2), tmp_path / "short")


def test_load_pairs_filters_ids(tmp_path):
    recs = synth_data(tiny_config(levels=1), tmp_path)
    ids = [recs[0]["id"], recs[-1]["id"]]
    assert sorted(p.id for p in load_pairs(tmp_path / MANIFEST_NAME, ids=ids)) == sorted(ids)


def test_check_disjoint():
    check_disjoint(["a", "b"], ["c"])
    with pytest.raises(ValueError):
        check_disjoint(["a", "b"], ["b"])


def test_manifest_bytes_identical_on_rerun(tmp_path):
    cfg = tiny_config(levels=2)
    synth_data(cfg, tmp_path / "a")
    synth_data(cfg, tmp_path / "b")
    assert (tmp_path / "a" / MANIFEST_NAME).read_bytes() == (tmp_path / "b" / MANIFEST_NAME).read_bytes()
