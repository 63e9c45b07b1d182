"""Per-level SRGAN-style generators and discriminators, and their multilevel chain."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .core import RunConfig

EPS_PROB = 1e-6


@dataclass(frozen=True)
class GeneratorSpec:
    level: int
    scale: int = 2
    n_res_blocks: int = 8
    n_channels: int = 64
    image_channels: int = 3


@dataclass(frozen=True)
class DiscriminatorSpec:
    level: int
    n_conv_blocks: int = 4
    base_channels: int = 32
    hidden: int = 128
    image_channels: int = 3


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.BatchNorm2d(channels),
            nn.PReLU(),
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.BatchNorm2d(channels),
        )

    def forward(self, x):
        return x + self.body(x)


class Generator(nn.Module):
    """9x9 head, residual trunk with a long skip, 2x pixel-shuffle stages, 9x9 tail, sigmoid."""

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        if spec.scale < 2 or spec.scale & (spec.scale - 1):
            raise ValueError(f"scale must be a power of two >= 2, got {spec.scale}")
        self.spec = spec
        c, img_c = spec.n_channels, spec.image_channels
        self.head = nn.Sequential(nn.Conv2d(img_c, c, 9, padding=4), nn.PReLU())
        self.trunk = nn.Sequential(*[ResidualBlock(c) for _ in range(spec.n_res_blocks)])
        ups = []
        for _ in range(int(math.log2(spec.scale))):
            ups += [nn.Conv2d(c, 4 * c, 3, padding=1), nn.PixelShuffle(2), nn.PReLU()]
        self.upsample = nn.Sequential(*ups)
        self.tail = nn.Conv2d(c, img_c, 9, padding=4)

    def forward(self, x):
        if x.shape[1] != self.spec.image_channels:
            raise ValueError(f"expected {self.spec.image_channels} channels, got {x.shape[1]}")
        h = self.head(x)
        h = h + self.trunk(h)
        return torch.sigmoid(self.tail(self.upsample(h)))


class Discriminator(nn.Module):
    """Strided 3x3 conv blocks doubling channels, global average pooling, 2-layer dense head."""

    def __init__(self, spec: DiscriminatorSpec):
        super().__init__()
        self.spec = spec
        layers = []
        c_in, c_out = spec.image_channels, spec.base_channels
        for i in range(spec.n_conv_blocks):
            layers.append(nn.Conv2d(c_in, c_out, 3, stride=2, padding=1))
            if i > 0:
                layers.append(nn.BatchNorm2d(c_out))
            layers.append(nn.LeakyReLU(0.2))
            c_in, c_out = c_out, c_out * 2
        self.features = nn.Sequential(*layers)
        self.head = nn.Sequential(
            nn.Linear(c_in, spec.hidden),
            nn.LeakyReLU(0.2),
            nn.Linear(spec.hidden, 1),
        )

    def logits(self, x):
        f = self.features(x).mean(dim=(2, 3))
        return self.head(f).squeeze(1)

    def forward(self, x):
        return torch.sigmoid(self.logits(x)).clamp(EPS_PROB, 1 - EPS_PROB)


def _seeded(seed: int, factory):
    gen_state = torch.random.get_rng_state()
    torch.manual_seed(seed)
    try:
        return factory()
    finally:
        torch.random.set_rng_state(gen_state)


def build_generator(spec: GeneratorSpec, seed: int) -> Generator:
    return _seeded(seed, lambda: Generator(spec))


def build_discriminator(spec: DiscriminatorSpec, seed: int) -> Discriminator:
    return _seeded(seed, lambda: Discriminator(spec))


def param_count(spec: GeneratorSpec | DiscriminatorSpec) -> int:
    """Analytic count of trainable scalars for a generator or discriminator spec."""
    conv = lambda k, cin, cout: k * k * cin * cout + cout  # noqa: E731
    if isinstance(spec, GeneratorSpec):
        c, img_c = spec.n_channels, spec.image_channels
        head = conv(9, img_c, c) + 1
        block = 2 * conv(3, c, c) + 2 * (2 * c) + 1
        up = int(math.log2(spec.scale)) * (conv(3, c, 4 * c) + 1)
        tail = conv(9, c, img_c)
        return head + spec.n_res_blocks * block + up + tail
    total, c_in, c_out = 0, spec.image_channels, spec.base_channels
    for i in range(spec.n_conv_blocks):
        total += conv(3, c_in, c_out) + (2 * c_out if i > 0 else 0)
        c_in, c_out = c_out, 2 * c_out
    return total + (c_in * spec.hidden + spec.hidden) + (spec.hidden + 1)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


def generator_specs(cfg: RunConfig) -> list[GeneratorSpec]:
    cap = cfg.capacity
    return [GeneratorSpec(l + 1, cfg.per_level_scale[l], cap.gen_blocks[l], cap.gen_channels[l], cfg.image_channels)
            for l in range(cfg.levels)]


def discriminator_specs(cfg: RunConfig) -> list[DiscriminatorSpec]:
    cap = cfg.capacity
    return [DiscriminatorSpec(l + 1, cap.disc_blocks[l], cap.disc_channels[l], cap.disc_hidden, cfg.image_channels)
            for l in range(cfg.levels)]


class MultilevelModel(nn.Module):
    """Ordered chain of L generators with one discriminator per level.

    ``generators[l - 1]`` maps level-l images to level-(l+1); ``discriminators[l - 1]``
    judges level-(l+1) images.
    """

    def __init__(self, cfg: RunConfig, seed: int | None = None):
        super().__init__()
        from .core import derive_seed

        seed = cfg.seed if seed is None else seed
        self.gen_specs = generator_specs(cfg)
        self.disc_specs = discriminator_specs(cfg)
        self.generators = nn.ModuleList(
            build_generator(s, derive_seed(seed, "init", "gen", s.level)) for s in self.gen_specs)
        self.discriminators = nn.ModuleList(
            build_discriminator(s, derive_seed(seed, "init", "disc", s.level)) for s in self.disc_specs)

    @property
    def levels(self) -> int:
        return len(self.generators)

    def theta(self, level: int) -> list[nn.Parameter]:
        return list(self.generators[level - 1].parameters())

    def phi(self, level: int) -> list[nn.Parameter]:
        return list(self.discriminators[level - 1].parameters())

    def compose(self, x: torch.Tensor, upto: int | None = None) -> list[torch.Tensor]:
        """Apply generators 1..upto in sequence; returns every intermediate output.

        Element k of the result is the level-(k+2) estimate, so ``[-1]`` is the
        output at level upto+1.
        """
        upto = self.levels if upto is None else upto
        if not 1 <= upto <= self.levels:
            raise ValueError(f"upto must lie in [1, {self.levels}], got {upto}")
        outs = []
        h = x
        for g in self.generators[:upto]:
            h = g(h)
            outs.append(h)
        return outs

    def forward(self, x):
        return self.compose(x)[-1]


def generator_forward(g: Generator, x: torch.Tensor) -> torch.Tensor:
    return g(x)


def compose_generators(model: MultilevelModel, x: torch.Tensor, upto: int) -> torch.Tensor:
    return model.compose(x, upto)[-1]


def discriminator_forward(d: Discriminator, x: torch.Tensor) -> torch.Tensor:
    return d(x)
