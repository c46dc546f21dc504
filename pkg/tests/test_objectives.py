import math

import numpy as np
import pytest

from eblab import objectives as obj
from eblab import tensor as T
from eblab.objectives import MarginSchedule, ObjectiveConfig, margin_at
from eblab.tensor import Tensor


def leaf(data):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


class TestEnergyLosses:
    def test_d_loss_direct_formula(self):
        loss = obj.ebgan_d_loss(Tensor([2.0]), Tensor([3.0]), 10.0)
        assert loss.item() == 9.0

    def test_d_loss_hinge_saturates(self):
        loss = obj.ebgan_d_loss(Tensor([2.0]), Tensor([15.0]), 10.0)
        assert loss.item() == 2.0

    def test_d_loss_zero_energies(self):
        assert obj.ebgan_d_loss(Tensor([0.0]), Tensor([0.0]), 10.0).item() == 10.0

    def test_d_loss_bounds(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            m = float(rng.random() * 20)
            e_real = rng.random(16) * 30
            e_fake = rng.random(16) * 30
            value = obj.ebgan_d_loss(Tensor(e_real), Tensor(e_fake), m).item()
            assert 0.0 <= value <= e_real.mean() + m + 1e-12

    def test_negative_energy_rejected(self):
        with pytest.raises(ValueError):
            obj.ebgan_d_loss(Tensor([-1.0]), Tensor([0.0]), 10.0)
        with pytest.raises(ValueError):
            obj.ebgan_g_loss(Tensor([-0.5]))

    def test_g_loss_values(self):
        assert obj.ebgan_g_loss(Tensor([3.0])).item() == 3.0
        assert obj.ebgan_g_loss(Tensor([0.0, 0.0])).item() == 0.0

    def test_generator_and_hinge_gradients_are_opposite_below_margin(self):
        m, batch = 10.0, 4
        e = leaf([1.0, 4.0, 7.0, 9.0])  # all below m
        obj.ebgan_g_loss(e).backward()
        g_gen = e.grad.copy()
        e = leaf([1.0, 4.0, 7.0, 9.0])
        T.mean(T.relu(T.sub(m, e))).backward()
        np.testing.assert_allclose(g_gen, -e.grad, atol=1e-15)
        np.testing.assert_allclose(g_gen, np.full(batch, 1.0 / batch))

    def test_generator_gradient_survives_above_margin(self):
        e = leaf([12.0, 15.0])  # above m: hinge is flat, generator slope stays
        obj.ebgan_g_loss(e).backward()
        np.testing.assert_allclose(e.grad, [0.5, 0.5])
        e = leaf([12.0, 15.0])
        T.mean(T.relu(T.sub(10.0, e))).backward()
        np.testing.assert_array_equal(e.grad, [0.0, 0.0])


class TestPullAwayTerm:
    def test_orthogonal_rows_exact_zero(self):
        s = Tensor([[1.0, 0.0], [0.0, 1.0]])
        assert obj.pull_away_term(s).item() == 0.0

    def test_identical_rows_exact_one(self):
        s = Tensor([[0.3, -1.7, 2.2]] * 4)
        assert obj.pull_away_term(s).item() == 1.0

    def test_three_row_case_exact(self):
        s = Tensor([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        assert obj.pull_away_term(s).item() == 2.0 / 6.0

    def test_bounded_and_scale_invariant(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            n, d = int(rng.integers(2, 9)), int(rng.integers(1, 6))
            s = rng.standard_normal((n, d))
            value = obj.pull_away_term(Tensor(s)).item()
            assert 0.0 <= value <= 1.0
            scales = rng.random(n) * 10 + 0.1
            rescaled = obj.pull_away_term(Tensor(s * scales[:, None])).item()
            assert abs(value - rescaled) <= 1e-12

    def test_zero_row_survives_by_default(self):
        s = Tensor([[1.0, 0.0], [0.0, 0.0]])
        assert obj.pull_away_term(s).item() == 0.0

    def test_zero_row_strict_raises(self):
        with pytest.raises(obj.ZeroRowError):
            obj.pull_away_term(Tensor([[1.0, 0.0], [0.0, 0.0]]), strict=True)

    def test_needs_two_rows(self):
        with pytest.raises(ValueError):
            obj.pull_away_term(Tensor([[1.0, 2.0]]))

    def test_gradient_against_central_differences(self):
        rng = np.random.default_rng(2)
        s = leaf(rng.standard_normal((5, 4)))
        assert T.grad_check(lambda: obj.pull_away_term(s), [s]) < 1e-5


class TestBaselineLosses:
    def test_d_loss_at_half(self):
        loss = obj.gan_d_loss(Tensor([0.5]), Tensor([0.5]))
        assert abs(loss.item() - 2.0 * math.log(2.0)) < 1e-15

    def test_g_loss_limit_at_confident_fake(self):
        assert obj.gan_g_loss(Tensor([1.0 - 1e-9])).item() < 1e-6

    def test_g_loss_gradient_minus_two_at_half(self):
        p = leaf([0.5])
        obj.gan_g_loss(p).backward()
        np.testing.assert_allclose(p.grad, [-2.0])

    def test_clamp_keeps_losses_finite_at_boundaries(self):
        assert math.isfinite(obj.gan_d_loss(Tensor([0.0]), Tensor([1.0])).item())
        assert math.isfinite(obj.gan_g_loss(Tensor([0.0])).item())


class TestMarginSchedule:
    def test_constant(self):
        sched = MarginSchedule("constant", 10.0)
        assert margin_at(sched, 0) == 10.0
        assert margin_at(sched, 10 ** 9) == 10.0

    def test_linear_endpoints_and_midpoint(self):
        sched = MarginSchedule("linear", 16.0, 60000)
        assert margin_at(sched, 0) == 16.0
        assert margin_at(sched, 30000) == 8.0
        assert margin_at(sched, 60000) == 0.0
        assert margin_at(sched, 90000) == 0.0

    def test_linear_non_increasing(self):
        sched = MarginSchedule("linear", 16.0, 1000)
        values = [margin_at(sched, s) for s in range(0, 1500, 7)]
        assert all(a >= b for a, b in zip(values, values[1:]))
        assert all(v >= 0.0 for v in values)

    def test_validation(self):
        with pytest.raises(ValueError):
            MarginSchedule("linear", 16.0, 0)
        with pytest.raises(ValueError):
            MarginSchedule("constant", -1.0)
        with pytest.raises(ValueError):
            MarginSchedule("cosine", 1.0)
        with pytest.raises(ValueError):
            margin_at(MarginSchedule(), -1)

    def test_objective_config_validation(self):
        with pytest.raises(ValueError):
            ObjectiveConfig(framework="wgan")
        with pytest.raises(ValueError):
            ObjectiveConfig(pt_weight=-0.1)
