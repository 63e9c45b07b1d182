"""Staged initialization and joint Adam training of the multilevel GAN chain.

Training runs as a list of stages: ``init`` for each level 1..L (earlier
generators frozen, constant learning rate), then one ``joint`` stage that
optimizes every level together under cosine annealing. A single-level config
(the QEGAN baseline) runs the joint stage only.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .core import RawPair, RunConfig, baseline_config, derive_seed
from .degrade import expand_to_effective_set
from .losses import LossWeights, adversarial_loss_d, adversarial_loss_g, fidelity_loss, total_loss
from .models import MultilevelModel

log = logging.getLogger(__name__)

MAX_EPOCHS_ENV = "MLQEGAN_MAX_EPOCHS"
LOG_COLUMNS = ["phase", "step", "level", "fidelity", "adv_g", "adv_d", "total_g", "total_d", "lr"]
COLLAPSE_THRESHOLD = 0.05
COLLAPSE_PATIENCE = 50


class TrainingDiverged(RuntimeError):
    pass


class CheckpointError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# schedule
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    initial_lr: float = 0.002
    total_steps: int = 1


def cosine_lr(step: int, sched: Schedule) -> float:
    if not 0 <= step <= sched.total_steps:
        raise ValueError(f"step {step} outside [0, {sched.total_steps}]")
    if sched.total_steps == 0:
        return sched.initial_lr
    return sched.initial_lr * 0.5 * (1.0 + math.cos(math.pi * step / sched.total_steps))


# ---------------------------------------------------------------------------
# data streams
# ---------------------------------------------------------------------------


class LevelStreams:
    """Effective training set as stacked tensors, keyed by target quality level m in [2, L+1]."""

    def __init__(self, streams: dict[int, list[tuple[np.ndarray, np.ndarray]]], dtype=torch.float32):
        self.low: dict[int, torch.Tensor] = {}
        self.target: dict[int, torch.Tensor] = {}
        for m, items in sorted(streams.items()):
            if items:
                self.low[m] = torch.as_tensor(np.stack([a for a, _ in items]), dtype=dtype)
                self.target[m] = torch.as_tensor(np.stack([b for _, b in items]), dtype=dtype)
            else:
                self.low[m] = self.target[m] = None
        self.levels = sorted(streams)

    @classmethod
    def from_pairs(cls, pairs: Sequence[RawPair], cfg: RunConfig, dtype=torch.float32) -> "LevelStreams":
        return cls(expand_to_effective_set(pairs, cfg), dtype=dtype)

    def size(self, m: int) -> int:
        t = self.low.get(m)
        return 0 if t is None else len(t)

    def sizes(self) -> dict[int, int]:
        return {m: self.size(m) for m in self.levels}


def epoch_indices(n: int, n_samples: int, seed: int) -> np.ndarray:
    """Concatenated seeded permutations of range(n), cut to n_samples (cycles short streams)."""
    rng = np.random.default_rng(seed)
    reps = -(-n_samples // n)
    if reps == 0:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate([rng.permutation(n) for _ in range(reps)])[:n_samples]


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------


@dataclass
class TrainState:
    cfg: RunConfig
    model: MultilevelModel
    stage: int = 0
    epoch: int = 0  # completed epochs within the current stage
    step: int = 0  # global optimizer-step counter
    opt_g: torch.optim.Optimizer | None = None
    opt_d: torch.optim.Optimizer | None = None
    collapse_run: int = 0
    rows: list[dict] = field(default_factory=list)
    opt_state_pending: dict | None = None

    @property
    def stages(self) -> list[tuple[str, int]]:
        return training_stages(self.cfg)

    @property
    def done(self) -> bool:
        return self.stage >= len(self.stages)


def training_stages(cfg: RunConfig) -> list[tuple[str, int]]:
    if cfg.levels == 1:
        return [("joint", 0)]
    return [("init", l) for l in range(1, cfg.levels + 1)] + [("joint", 0)]


def effective_epochs(cfg: RunConfig) -> int:
    cap = os.environ.get(MAX_EPOCHS_ENV)
    return min(cfg.epochs, int(cap)) if cap else cfg.epochs


def stage_epochs(cfg: RunConfig, kind: str) -> int:
    epochs = effective_epochs(cfg)
    return max(1, round(epochs * cfg.init_epoch_fraction)) if kind == "init" else epochs


def steps_per_epoch(cfg: RunConfig, streams: LevelStreams, kind: str, level: int) -> int:
    if kind == "init":
        n = streams.size(level + 1)
    else:
        n = max(streams.size(m) for m in range(2, cfg.levels + 2))
    return -(-n // cfg.batch_size)


def new_state(cfg: RunConfig, dtype=torch.float32) -> TrainState:
    model = MultilevelModel(cfg).to(dtype)
    return TrainState(cfg=cfg, model=model)


def _adam(params, cfg: RunConfig) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=cfg.initial_lr, betas=(cfg.adam_beta1, cfg.adam_beta2), eps=cfg.adam_eps)


def _prepare_stage(state: TrainState) -> None:
    """Set trainability/modes and build optimizers for the current stage (fresh Adam per stage)."""
    kind, level = state.stages[state.stage]
    model, cfg = state.model, state.cfg
    if kind == "init":
        for k, (g, d) in enumerate(zip(model.generators, model.discriminators), start=1):
            g.requires_grad_(k == level)
            d.requires_grad_(k == level)
            g.train(k == level)
            d.train(k == level)
        state.opt_g = _adam(model.theta(level), cfg)
        state.opt_d = _adam(model.phi(level), cfg)
    else:
        model.requires_grad_(True)
        model.train()
        state.opt_g = _adam([p for l in range(1, cfg.levels + 1) for p in model.theta(l)], cfg)
        state.opt_d = _adam([p for l in range(1, cfg.levels + 1) for p in model.phi(l)], cfg)


def _set_lr(opt: torch.optim.Optimizer, lr: float) -> None:
    for group in opt.param_groups:
        group["lr"] = lr


# ---------------------------------------------------------------------------
# one training step
# ---------------------------------------------------------------------------


def _level_losses(model: MultilevelModel, cfg: RunConfig, levels: Sequence[int],
                  fakes: dict[int, torch.Tensor], reals: dict[int, torch.Tensor],
                  opt_d: torch.optim.Optimizer, opt_g: torch.optim.Optimizer,
                  weights: LossWeights) -> dict:
    """Alternating D-step then G-step over the given levels; weights are indexed by level."""
    L = weights.levels
    adv_d = [0.0] * L
    active = [l for l in levels if weights.alpha[l - 1] > 0]

    if active:
        for l in active:
            model.discriminators[l - 1].requires_grad_(True)
        d_terms = [0.0] * L
        for l in active:
            d = model.discriminators[l - 1]
            d_terms[l - 1] = adversarial_loss_d(d(reals[l]), d(fakes[l].detach()))
        loss_d = total_loss(None, d_terms, weights, phase="d")
        opt_d.zero_grad(set_to_none=True)
        loss_d.backward()
        opt_d.step()
        adv_d = [float(t) for t in d_terms]

    fid = [0.0] * L
    adv_g = [0.0] * L
    for l in active:
        model.discriminators[l - 1].requires_grad_(False)
    for l in levels:
        fid[l - 1] = fidelity_loss(fakes[l], reals[l])
        if l in active:
            adv_g[l - 1] = adversarial_loss_g(model.discriminators[l - 1](fakes[l]), cfg.adversarial_mode)
    loss_g = total_loss(fid, adv_g, weights, phase="g")
    if not torch.isfinite(loss_g):
        raise TrainingDiverged(f"non-finite generator loss {float(loss_g)}; fidelity={[float(f) for f in fid]}")
    opt_g.zero_grad(set_to_none=True)
    loss_g.backward()
    opt_g.step()
    for l in active:
        model.discriminators[l - 1].requires_grad_(True)

    return {
        "fidelity": [float(f) for f in fid],
        "adv_g": [float(a) for a in adv_g],
        "adv_d": adv_d,
        "active": active,
        "total_g": float(loss_g),
        "total_d": float(total_loss(None, adv_d, weights, phase="d")),
    }


def _record(state: TrainState, phase: str, levels: Sequence[int], out: dict, lr: float) -> None:
    for l in levels:
        on = l in out["active"]
        state.rows.append({
            "phase": phase,
            "step": state.step,
            "level": l,
            "fidelity": out["fidelity"][l - 1],
            "adv_g": out["adv_g"][l - 1] if on else "",
            "adv_d": out["adv_d"][l - 1] if on else "",
            "total_g": out["total_g"],
            "total_d": out["total_d"],
            "lr": lr,
        })
    if out["active"]:
        if min(out["adv_d"][l - 1] for l in out["active"]) < COLLAPSE_THRESHOLD:
            state.collapse_run += 1
            if state.collapse_run == COLLAPSE_PATIENCE:
                log.warning("discriminator loss below %.2f for %d consecutive steps (step %d)",
                            COLLAPSE_THRESHOLD, COLLAPSE_PATIENCE, state.step)
        else:
            state.collapse_run = 0


def _run_epoch(state: TrainState, streams: LevelStreams) -> None:
    cfg, model = state.cfg, state.model
    kind, level = state.stages[state.stage]
    n_steps = steps_per_epoch(cfg, streams, kind, level)
    B = cfg.batch_size
    stage_name = f"{kind}{level}"

    if kind == "init":
        m = level + 1
        if streams.size(m) == 0:
            raise ValueError(f"empty training stream for level {m}")
        idx = epoch_indices(streams.size(m), n_steps * B, derive_seed(cfg.seed, "data", stage_name, state.epoch, m))
        # init stage loss: L^F_l + alpha_l L^A_l on level l alone
        weights = LossWeights([1.0 if k == level else 0.0 for k in range(1, cfg.levels + 1)],
                              [cfg.alpha[k - 1] if k == level else 0.0 for k in range(1, cfg.levels + 1)])
        for s in range(n_steps):
            b = torch.as_tensor(idx[s * B:(s + 1) * B])
            x, y = streams.low[m][b], streams.target[m][b]
            if level > 1:
                with torch.no_grad():
                    x = model.compose(x, level - 1)[-1]
            fake = model.generators[level - 1](x)
            lr = cfg.initial_lr
            _set_lr(state.opt_g, lr)
            _set_lr(state.opt_d, lr)
            out = _level_losses(model, cfg, [level], {level: fake}, {level: y}, state.opt_d, state.opt_g, weights)
            _record(state, stage_name, [level], out, lr)
            state.step += 1
        return

    levels = list(range(1, cfg.levels + 1))
    for l in levels:
        if streams.size(l + 1) == 0:
            raise ValueError(f"empty training stream for level {l + 1}")
    idx = {l: epoch_indices(streams.size(l + 1), n_steps * B,
                            derive_seed(cfg.seed, "data", stage_name, state.epoch, l + 1)) for l in levels}
    weights = LossWeights(cfg.lambda_, cfg.alpha)
    total = stage_epochs(cfg, "joint") * n_steps
    sched = Schedule(cfg.initial_lr, max(total - 1, 0))
    for s in range(n_steps):
        t = state.epoch * n_steps + s
        lr = cosine_lr(t, sched)
        _set_lr(state.opt_g, lr)
        _set_lr(state.opt_d, lr)
        fakes, reals = {}, {}
        for l in levels:
            b = torch.as_tensor(idx[l][s * B:(s + 1) * B])
            fakes[l] = model.compose(streams.low[l + 1][b], l)[-1]
            reals[l] = streams.target[l + 1][b]
        out = _level_losses(model, cfg, levels, fakes, reals, state.opt_d, state.opt_g, weights)
        _record(state, "joint", levels, out, lr)
        state.step += 1


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------


def init_stage(state: TrainState, level: int, streams: LevelStreams) -> TrainState:
    """Run the full init budget for ``level`` (levels below must already be initialized)."""
    target = ("init", level)
    if target not in state.stages:
        raise ValueError(f"config has no init stage for level {level}")
    state.stage, state.epoch = state.stages.index(target), 0
    _prepare_stage(state)
    for _ in range(stage_epochs(state.cfg, "init")):
        _run_epoch(state, streams)
        state.epoch += 1
    state.stage, state.epoch = state.stage + 1, 0
    return state


def joint_train(state: TrainState, streams: LevelStreams) -> TrainState:
    state.stage, state.epoch = state.stages.index(("joint", 0)), 0
    _prepare_stage(state)
    for _ in range(stage_epochs(state.cfg, "joint")):
        _run_epoch(state, streams)
        state.epoch += 1
    state.stage, state.epoch = state.stage + 1, 0
    return state


def train(cfg: RunConfig, streams: LevelStreams, out_dir: str | Path | None = None,
          resume: str | Path | None = None, halt_after_epochs: int | None = None,
          dtype=torch.float32) -> TrainState:
    """Run (or continue) the full stage list.

    ``halt_after_epochs`` stops after that many epochs in this call, leaving a
    checkpoint behind; it exists to exercise interrupted runs.
    """
    state = load_checkpoint(resume, cfg, dtype=dtype) if resume else new_state(cfg, dtype=dtype)
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    prepared = False
    ran = 0
    while not state.done:
        kind, level = state.stages[state.stage]
        if not prepared:
            _prepare_stage(state)
            if resume and state.opt_state_pending is not None:
                state.opt_g.load_state_dict(state.opt_state_pending["g"])
                state.opt_d.load_state_dict(state.opt_state_pending["d"])
                state.opt_state_pending = None
            prepared = True
        _run_epoch(state, streams)
        state.epoch += 1
        ran += 1
        if state.epoch >= stage_epochs(cfg, kind):
            state.stage, state.epoch = state.stage + 1, 0
            prepared = False
        if out and cfg.checkpoint_every and ran % cfg.checkpoint_every == 0:
            save_checkpoint(state, out / f"ckpt_step{state.step}.ckpt")
        if halt_after_epochs is not None and ran >= halt_after_epochs:
            if out:
                save_checkpoint(state, out / "last.ckpt")
            break
    if out:
        write_log(state.rows, out / "log.csv")
        if state.done:
            save_checkpoint(state, out / "model.ckpt")
    return state


def pairs_for_baseline(pairs: Sequence[RawPair], cfg: RunConfig) -> list[RawPair]:
    """Highest-level pairs re-tagged for the single-level baseline (level L+1 -> level 2)."""
    top = cfg.levels + 1
    return [RawPair(p.low, p.high, 2, p.id) for p in pairs if p.level_j == top]


def train_qegan_baseline(pairs: Sequence[RawPair], cfg: RunConfig, out_dir: str | Path | None = None,
                         dtype=torch.float32) -> TrainState:
    """Train the single-level baseline on the highest-quality pairs only."""
    base = cfg if cfg.levels == 1 else baseline_config(cfg)
    high = pairs_for_baseline(pairs, cfg) if cfg.levels > 1 else list(pairs)
    if not high:
        raise ValueError("baseline needs at least one highest-quality pair")
    streams = LevelStreams.from_pairs(high, base, dtype=dtype)
    return train(base, streams, out_dir=out_dir, dtype=dtype)


def write_log(rows: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def read_log(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def _flat_params(model: MultilevelModel) -> dict[str, torch.Tensor]:
    flat = {}
    for l, g in enumerate(model.generators, start=1):
        for k, v in g.state_dict().items():
            flat[f"gen/{l}/{k}"] = v.clone()
    for l, d in enumerate(model.discriminators, start=1):
        for k, v in d.state_dict().items():
            flat[f"disc/{l}/{k}"] = v.clone()
    return flat


def _load_flat(model: MultilevelModel, flat: dict[str, torch.Tensor]) -> None:
    for kind, mods in (("gen", model.generators), ("disc", model.discriminators)):
        for l, m in enumerate(mods, start=1):
            prefix = f"{kind}/{l}/"
            sd = {k[len(prefix):]: v for k, v in flat.items() if k.startswith(prefix)}
            m.load_state_dict(sd)


def save_checkpoint(state: TrainState, path: str | Path) -> None:
    payload = {
        "format": "mlqegan-ckpt/1",
        "config": state.cfg.to_dict(),
        "config_hash": state.cfg.hash(),
        "params": _flat_params(state.model),
        "stage": state.stage,
        "epoch": state.epoch,
        "step": state.step,
        "collapse_run": state.collapse_run,
        # optimizer moments belong to the stage in progress; none at a stage boundary
        "optim": None if state.epoch == 0 or state.opt_g is None else
        {"g": state.opt_g.state_dict(), "d": state.opt_d.state_dict()},
        "rows": list(state.rows),
        "torch_rng": torch.random.get_rng_state(),
    }
    tmp = Path(str(path) + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)


def load_checkpoint(path: str | Path, cfg: RunConfig | None = None, force: bool = False,
                    dtype=torch.float32) -> TrainState:
    """Restore a TrainState; rejects a checkpoint whose structural config hash differs from ``cfg``."""
    from .core import config_from_dict, validate_config

    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:  # corrupt or foreign file
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != "mlqegan-ckpt/1":
        raise CheckpointError(f"{path} is not an mlqegan checkpoint")
    saved_cfg = validate_config(config_from_dict(payload["config"]))
    if cfg is not None and cfg.hash() != payload["config_hash"] and not force:
        raise CheckpointError(f"config hash mismatch: checkpoint {payload['config_hash']} vs config {cfg.hash()}")
    cfg = cfg or saved_cfg
    model = MultilevelModel(cfg).to(dtype)
    _load_flat(model, payload["params"])
    state = TrainState(cfg=cfg, model=model, stage=payload["stage"], epoch=payload["epoch"],
                       step=payload["step"], collapse_run=payload["collapse_run"], rows=list(payload["rows"]))
    state.opt_state_pending = payload["optim"]
    torch.random.set_rng_state(payload["torch_rng"])
    return state
