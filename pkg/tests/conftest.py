import numpy as np
import pytest
from hypothesis import settings

from mlqegan.core import CapacityConfig, DatasetConfig, RawPair, RunConfig, validate_config

# CPU-bound torch examples have erratic wall time; hypothesis deadlines only add flakes
settings.register_profile("default", deadline=None)
settings.load_profile("default")


def tiny_config(levels=2, epochs=2, base=4, seed=0, **kw) -> RunConfig:
    """Smallest trainable config: 1 res block, 4 channels, base images of ``base`` px."""
    cap = CapacityConfig(gen_blocks=[1] * levels, gen_channels=[4] * levels,
                         disc_blocks=[2] * levels, disc_channels=[4] * levels, disc_hidden=8)
    ds = DatasetConfig(base_h=base, base_w=base, level_counts=[6] * levels, val_count=2, test_count=3,
                       source_size=max(64, base * 2**levels * 4))
    cfg = RunConfig(levels=levels, epochs=epochs, seed=seed, batch_size=4, init_epoch_fraction=0.5,
                    capacity=cap, dataset=ds, **kw)
    return validate_config(cfg)


def random_pairs(cfg: RunConfig, counts: dict[int, int], seed: int = 0) -> list[RawPair]:
    """Random-content pairs at the requested levels with consistent geometry."""
    rng = np.random.default_rng(seed)
    c, h, w = cfg.image_channels, cfg.dataset.base_h, cfg.dataset.base_w
    pairs = []
    for j, n in sorted(counts.items()):
        s = cfg.resolution_scale(j)
        for i in range(n):
            pairs.append(RawPair(rng.random((c, h, w)), rng.random((c, h * s, w * s)), j, f"p{j}-{i}"))
    return pairs


@pytest.fixture
def tiny_cfg():
    return tiny_config()


# acceptance results, filled by tests/test_acceptance.py and printed at session end
ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, status, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2} {status:4}  {title}: {detail}")
