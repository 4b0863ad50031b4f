import itertools
import math

import numpy as np
import pytest

from semclip import autodiff as ad
from semclip.autodiff import Tensor, finite_difference_check
from semclip.errors import ContractError, DegenerateProjectionError
from semclip.losses import (
    TAU_INIT, VARIANTS, LossWeights, Temperature, contrastive_loss, negation_loss, paraphrase_loss,
    total_loss,
)
from semclip.projection import init_projection_bank

ZERO = Tensor(np.array([0.0]))
WEIGHT_GRID = [LossWeights(*w) for w in itertools.product((0, 1), repeat=3) if any(w)]


def _unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _oracle_contrastive(img, txt, tau):
    s = tau * img @ txt.T
    def ce(m):
        return np.mean([-m[i, i] + math.log(np.exp(m[i]).sum()) for i in range(len(m))])
    return 0.5 * (ce(s) + ce(s.T))


def test_contrastive_examples():
    e = np.eye(4)
    assert contrastive_loss(Tensor(e[:1]), Tensor(e[:1]), ZERO).item() == 0.0
    loss = contrastive_loss(Tensor(e[:2]), Tensor(e[:2]), ZERO).item()
    assert loss == pytest.approx(-math.log(math.e / (math.e + 1)), abs=1e-4)
    assert loss == pytest.approx(0.3133, abs=1e-4)
    with pytest.raises(ContractError):
        contrastive_loss(Tensor(np.zeros((0, 4))), Tensor(np.zeros((0, 4))), ZERO)


def test_contrastive_matches_oracle(rng):
    img, txt = _unit_rows(rng, 6, 5), _unit_rows(rng, 6, 5)
    theta = Tensor(np.array([math.log(TAU_INIT)]))
    assert contrastive_loss(Tensor(img), Tensor(txt), theta).item() == pytest.approx(
        _oracle_contrastive(img, txt, TAU_INIT), rel=1e-12)


def test_contrastive_permutation_invariant(rng):
    img, txt = _unit_rows(rng, 5, 4), _unit_rows(rng, 5, 4)
    perm = rng.permutation(5)
    a = contrastive_loss(Tensor(img), Tensor(txt), ZERO).item()
    b = contrastive_loss(Tensor(img[perm]), Tensor(txt[perm]), ZERO).item()
    assert a == pytest.approx(b, abs=1e-12)


def test_contrastive_monotone_in_matched_cosine():
    # 2-D embeddings: rotating text 0 towards image 0 raises only S_00 among
    # the terms that matter; other images are kept orthogonal to both.
    img = np.zeros((4, 6))
    img[0, 0] = 1.0
    img[1:, 2:5] = np.eye(3)
    txt = img.copy()
    losses = []
    for angle in (1.2, 0.8, 0.4, 0.0):
        txt[0, :2] = [math.cos(angle), math.sin(angle)]
        losses.append(contrastive_loss(Tensor(img), Tensor(txt), ZERO).item())
    assert all(a > b for a, b in zip(losses, losses[1:]))


def test_paraphrase_examples():
    v = Tensor(np.array([1.0, 0.0]))
    assert paraphrase_loss(v, v).item() == 0.0
    assert paraphrase_loss(v, Tensor(np.array([-1.0, 0.0]))).item() == pytest.approx(2.0)
    assert paraphrase_loss(v, Tensor(np.array([1.0, 1.0]))).item() == pytest.approx(0.2929, abs=1e-4)
    with pytest.raises(DegenerateProjectionError):
        paraphrase_loss(v, Tensor(np.zeros(2)))


def test_negation_examples():
    v = Tensor(np.array([1.0, 0.0]))
    assert negation_loss(v, Tensor(np.array([0.0, 3.0]))).item() == 0.0
    assert negation_loss(v, v).item() == pytest.approx(1.0)
    assert negation_loss(v, Tensor(np.array([-0.5, math.sqrt(0.75)]))).item() == 0.0
    with pytest.raises(DegenerateProjectionError):
        negation_loss(Tensor(np.zeros(2)), v)


def test_negation_dead_zone_gradient_is_zero(rng):
    p = Tensor(rng.standard_normal((8, 3)), requires_grad=True)
    pm = Tensor(-p.data + 0.1 * rng.standard_normal((8, 3)), requires_grad=True)
    loss = negation_loss(p, pm)
    ad.backward(loss)
    assert loss.item() == 0.0
    assert not p.grad.any() and not pm.grad.any()


def test_weights_validation():
    with pytest.raises(ContractError):
        LossWeights(0, 0, 0)
    with pytest.raises(ContractError):
        LossWeights(-1, 1, 1)
    assert VARIANTS["baseline"] == LossWeights(1, 0, 0)
    assert VARIANTS["semclip"] == LossWeights(1, 1, 1)


def test_temperature_init_and_clamp():
    t = Temperature()
    assert t.tau == pytest.approx(14.2857, abs=1e-4)
    t.theta.data[:] = 10.0
    t.clamp()
    assert t.tau == pytest.approx(100.0)


def _batch(rng, n=4, d=6):
    return [Tensor(rng.standard_normal((n, d))) for _ in range(4)]


def test_total_weight_collapse(rng):
    bank = init_projection_bank(6, 2, 0)
    img, t, tp, tm = _batch(rng)
    total, rep = total_loss(img, t, tp, tm, VARIANTS["baseline"], bank, ZERO)
    assert total.item() == rep.contrastive
    assert rep.paraphrase > 0  # still reported
    total, rep = total_loss(img, t, tp, tm, LossWeights(0, 1, 0), bank, ZERO)
    assert total.item() == pytest.approx(rep.paraphrase, abs=1e-15)


@pytest.mark.parametrize("weights", WEIGHT_GRID, ids=str)
def test_total_is_convex_combination_and_gradients(rng, weights):
    bank = init_projection_bank(6, 2, 0)
    img, t, tp, tm = _batch(rng)
    total, rep = total_loss(img, t, tp, tm, weights, bank, ZERO)
    parts = [v for v, w in zip((rep.contrastive, rep.paraphrase, rep.negation), weights.__dict__.values()) if w]
    assert min(parts) - 1e-12 <= total.item() <= max(parts) + 1e-12
    for i in range(4):
        def f(x, i=i):
            args = [img, t, tp, tm]
            args[i] = x
            return total_loss(*args, weights, bank, ZERO)[0]
        assert finite_difference_check(f, [img, t, tp, tm][i].data.copy()) < 1e-4
    assert finite_difference_check(lambda th: total_loss(img, t, tp, tm, weights, bank, th)[0],
                                   np.array([0.3])) < 1e-4


def test_total_arithmetic_mean(rng):
    bank = init_projection_bank(6, 2, 0)
    total, rep = total_loss(*_batch(rng), LossWeights(1, 1, 1), bank, ZERO)
    assert total.item() == pytest.approx((rep.contrastive + rep.paraphrase + rep.negation) / 3, abs=1e-14)
