import math

import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from mlqegan.losses import (
    LossWeights,
    adversarial_loss_d,
    adversarial_loss_g,
    fidelity_loss,
    total_loss,
)

small = st.floats(0.0, 10.0, allow_nan=False)


def test_reported_weights_example():
    w = LossWeights([1e-4, 1.0], [3e-5, 3e-5])
    got = total_loss([0.02, 0.04], [0.7, 0.7], w, phase="g")
    expected = 1e-4 * (0.02 + 3e-5 * 0.7) + 1.0 * (0.04 + 3e-5 * 0.7)
    assert got == pytest.approx(expected, rel=1e-15)
    assert got == pytest.approx(0.040023, abs=1e-6)


def test_discriminator_phase_ignores_fidelity():
    w = LossWeights([0.5, 2.0], [0.1, 0.3])
    assert total_loss([9.0, 9.0], [1.0, 2.0], w, phase="d") == pytest.approx(0.5 * 0.1 + 2.0 * 0.3 * 2.0)


@given(st.lists(st.tuples(small, small, small, small), min_size=1, max_size=4), st.floats(0.0, 5.0))
def test_linear_in_lambda(levels, k):
    lam = [a for a, _, _, _ in levels]
    alpha = [b for _, b, _, _ in levels]
    fid = [c for _, _, c, _ in levels]
    adv = [d for _, _, _, d in levels]
    base = total_loss(fid, adv, LossWeights(lam, alpha))
    scaled = total_loss(fid, adv, LossWeights([k * v for v in lam], alpha))
    assert scaled == pytest.approx(k * base, rel=1e-9, abs=1e-9)


@given(st.lists(st.tuples(small, small, small), min_size=1, max_size=4), st.data())
def test_affine_in_alpha_per_level(levels, data):
    lam = [a for a, _, _ in levels]
    fid = [b for _, b, _ in levels]
    adv = [c for _, _, c in levels]
    i = data.draw(st.integers(0, len(levels) - 1))
    alphas = [data.draw(st.lists(small, min_size=len(levels), max_size=len(levels)))]
    base = list(alphas[0])

    def at(a):
        al = list(base)
        al[i] = a
        return total_loss(fid, adv, LossWeights(lam, al))

    f0, f1, f2 = at(0.0), at(1.0), at(2.0)
    assert f2 - f1 == pytest.approx(f1 - f0, rel=1e-9, abs=1e-9)
    assert f1 - f0 == pytest.approx(lam[i] * adv[i], rel=1e-9, abs=1e-9)


def test_length_and_sign_checks():
    with pytest.raises(ValueError):
        LossWeights([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        LossWeights([-1.0], [1.0])
    with pytest.raises(ValueError):
        total_loss([1.0], [1.0, 2.0], LossWeights([1.0, 1.0], [0.0, 0.0]))
    with pytest.raises(ValueError):
        total_loss([1.0], [1.0], LossWeights([1.0], [1.0]), phase="x")


@given(st.integers(0, 2**31))
def test_fidelity_symmetric_and_mse(seed):
    g = torch.Generator().manual_seed(seed)
    a, b = torch.rand(2, 3, 4, 4, generator=g), torch.rand(2, 3, 4, 4, generator=g)
    assert torch.equal(fidelity_loss(a, b), fidelity_loss(b, a))
    torch.testing.assert_close(fidelity_loss(a, b), ((a - b) ** 2).mean())


def test_fidelity_shape_mismatch():
    with pytest.raises(ValueError):
        fidelity_loss(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 8, 8))


def test_adversarial_values():
    real, fake = torch.tensor([0.8, 0.6]), torch.tensor([0.3, 0.1])
    expected_d = -((math.log(0.8) + math.log(0.6)) / 2 + (math.log(0.7) + math.log(0.9)) / 2)
    assert float(adversarial_loss_d(real, fake)) == pytest.approx(expected_d, rel=1e-6)
    assert float(adversarial_loss_g(fake, "saturating")) == pytest.approx((math.log(0.7) + math.log(0.9)) / 2, rel=1e-6)
    assert float(adversarial_loss_g(fake)) == pytest.approx(-(math.log(0.3) + math.log(0.1)) / 2, rel=1e-6)


def test_adversarial_errors():
    with pytest.raises(ValueError):
        adversarial_loss_d(torch.tensor([1.0]), torch.tensor([0.5]))
    with pytest.raises(ValueError):
        adversarial_loss_g(torch.tensor([0.0]))
    with pytest.raises(ValueError):
        adversarial_loss_g(torch.tensor([0.5]), "hinge")


@pytest.mark.parametrize("p", [1e-6, 1 - 1e-6])
def test_finite_at_clamp_limits(p):
    t = torch.tensor([p], dtype=torch.float64)
    for value in (adversarial_loss_d(t, t), adversarial_loss_g(t, "saturating"), adversarial_loss_g(t)):
        assert torch.isfinite(value)
