import numpy as np
import pytest
import torch

from bread.errors import NumericError, ShapeError
from bread.ian import EPS, adjust_luminance, estimate_illumination, ian_loss, ian_loss_terms
from bread.nnkit import IAN_SPEC, build_network

from .oracles import ian_loss_loop


def t(a):
    return torch.from_numpy(np.asarray(a, dtype=np.float64))[None, None]


def test_adjust_examples():
    assert adjust_luminance(np.array(0.2), np.array(0.5)) == pytest.approx(0.2 / 0.5001)
    assert adjust_luminance(np.array(0.1), np.array(0.1)) == pytest.approx(0.999, abs=1e-3)
    y = np.random.default_rng(0).random((4, 4))
    np.testing.assert_allclose(adjust_luminance(y, np.ones_like(y)), y, rtol=1.1e-4)


def test_adjust_is_unclamped_and_checks_shape():
    assert adjust_luminance(np.array(0.5), np.array(0.1)) > 1.0
    with pytest.raises(ShapeError):
        adjust_luminance(np.zeros((2, 2)), np.zeros((2, 3)))


def test_estimate_range():
    out = estimate_illumination(build_network(IAN_SPEC), torch.rand(1, 1, 32, 32))
    assert ((out > 0) & (out < 1)).all()


def test_loss_matches_scalar_loop(rng):
    for _ in range(5):
        y_low = rng.random((8, 8)) * 0.3
        y_high = rng.random((8, 8))
        l_hat = rng.uniform(0.05, 1.0, (8, 8))
        got = ian_loss(t(y_low), t(y_high), t(l_hat)).item()
        assert got == pytest.approx(ian_loss_loop(y_low, y_high, l_hat), rel=1e-6)


def test_constant_scene_fixed_point():
    c = torch.full((1, 1, 8, 8), 0.4, dtype=torch.float64)
    terms = ian_loss_terms(c, c, torch.full_like(c, 1 - EPS))
    assert terms["smoothness"].item() == 0 and terms["consistency"].item() == 0
    assert ian_loss(c, c, torch.full_like(c, 1 - EPS)).item() == pytest.approx(0.0, abs=1e-12)


def test_exact_relative_illumination(rng):
    y_high = t(rng.random((8, 8)))
    terms = ian_loss_terms(0.5 * y_high, y_high, torch.full_like(y_high, 0.5))
    assert terms["fidelity"].item() < 1e-7


def test_nonfinite_term_named():
    y = torch.rand(1, 1, 8, 8)
    with pytest.raises(NumericError, match="ian.fidelity"):
        ian_loss(y, y, torch.full_like(y, -EPS))


@pytest.mark.slow
def test_trained_illumination_is_continuous(desk_bundle):
    from bread.dataprep import load_paired_dataset
    from bread.imagecore import rgb_to_ycbcr

    from .conftest import LOL8

    low = load_paired_dataset(LOL8)[0].low[:, :192, :296]
    y = torch.from_numpy(np.ascontiguousarray(rgb_to_ycbcr(low).y))[None, None]
    with torch.no_grad():
        a = estimate_illumination(desk_bundle.ian, y)
        b = estimate_illumination(desk_bundle.ian, 0.999 * y)
    assert (a - b).abs().mean().item() < 0.05
