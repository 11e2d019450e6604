"""
Tests for the weighted Fréchet mean solver.
"""

import unittest

import numpy as np
import torch
from scipy.optimize import minimize

from hypmoce import lorentz
from hypmoce import points as P
from hypmoce.config import FrechetConfig
from hypmoce.errors import ConvergenceError, DimensionError, ParameterError
from hypmoce.frechet import frechet_mean, frechet_var, frechet_variance, weighted_frechet_mean
from hypmoce.lorentz import DTYPE

TIGHT = FrechetConfig(max_iters=500, tol=1e-12)


def oracle_mean(points, weights, k, starts):
    """Multi-start BFGS over exp_o coordinates, independent of the fixed-point solver."""
    pts = torch.as_tensor(points, dtype=DTYPE)
    w = torch.as_tensor(weights, dtype=DTYPE)
    w = w / w.sum()

    def objective(x):
        mu = lorentz.expmap0(torch.as_tensor(x, dtype=DTYPE), k)
        return float((w * lorentz.dist(mu.unsqueeze(0), pts, k) ** 2).sum())

    best = None
    for start in starts:
        result = minimize(objective, start, method="BFGS", options={"gtol": 1e-12, "maxiter": 10000})
        if best is None or result.fun < best.fun:
            best = result
    return lorentz.expmap0(torch.as_tensor(best.x, dtype=DTYPE), k)


class TestFrechetMean(unittest.TestCase):

    def test_matches_oracle(self):
        """Test that the solver agrees with an independent optimizer on random instances."""
        rng = np.random.default_rng(7)
        for _ in range(100):
            k = -float(rng.uniform(0.25, 4.0))
            dim = int(rng.integers(2, 5))
            count = int(rng.integers(3, 11))
            space = rng.normal(scale=0.8, size=(count, dim))
            pts = lorentz.lift(torch.as_tensor(space, dtype=DTYPE), k)
            weights = rng.uniform(0.1, 1.0, size=count)

            mean = frechet_mean(pts, k, torch.as_tensor(weights, dtype=DTYPE), TIGHT)
            starts = [np.zeros(dim)] + [rng.normal(scale=0.5, size=dim) for _ in range(2)]
            expected = oracle_mean(pts, weights, k, starts)
            self.assertLess(float(lorentz.dist(mean, expected, k)), 1e-5)

    def test_two_point_midpoint(self):
        """Test that the equal-weight mean of two points is their midpoint."""
        k = -1.5
        p = lorentz.expmap0(torch.tensor([1.0, -0.5], dtype=DTYPE), k)
        q = lorentz.expmap0(torch.tensor([-0.3, 0.9], dtype=DTYPE), k)
        mean = frechet_mean(torch.stack([p, q]), k, config=TIGHT)
        self.assertLess(float(lorentz.dist(mean, lorentz.geodesic(p, q, 0.5, k), k)), 1e-6)

    def test_single_point_and_one_hot(self):
        """Test that a lone point, or a one-hot weighting, returns that point."""
        k = -1.0
        pts = lorentz.lift(torch.tensor([[0.1, 0.2], [1.0, -1.0], [0.5, 0.5]], dtype=DTYPE), k)
        self.assertTrue(torch.equal(frechet_mean(pts[:1], k), pts[0]))
        one_hot = torch.tensor([0.0, 1.0, 0.0], dtype=DTYPE)
        self.assertTrue(torch.equal(frechet_mean(pts, k, one_hot), pts[1]))

    def test_batched_matches_individual(self):
        """Test that leading batch dimensions are independent problems."""
        k = -0.7
        g = torch.Generator().manual_seed(0)
        pts = lorentz.lift(torch.randn(3, 5, 4, dtype=DTYPE, generator=g), k)
        batched = frechet_mean(pts, k, config=TIGHT)
        for i in range(3):
            single = frechet_mean(pts[i], k, config=TIGHT)
            self.assertLess(float(lorentz.dist(batched[i], single, k)), 1e-9)

    def test_default_settings_converge_on_spread_batches(self):
        """Test that the default stopping rule is reached on widely spread batches."""
        g = torch.Generator().manual_seed(0)
        for k, scale in ((-4.0, 0.5), (-1.0, 1.0), (-4.0, 1.0), (-1.0, 2.0)):
            for _ in range(10):
                pts = lorentz.expmap0(torch.randn(8, 5, dtype=DTYPE, generator=g) * scale, k)
                mean = frechet_mean(pts, k)
                tangent = lorentz.logmap(mean.unsqueeze(0), pts, k).mean(0)
                self.assertLess(float(lorentz.norm(tangent)), FrechetConfig().tol)

    def test_default_settings_converge_batched(self):
        """Test default settings on a stack of independent spread batches."""
        k = -4.0
        g = torch.Generator().manual_seed(1)
        pts = lorentz.expmap0(torch.randn(16, 8, 5, dtype=DTYPE, generator=g) * 0.5, k)
        mean = frechet_mean(pts, k)
        tangent = lorentz.logmap(mean.unsqueeze(-2), pts, k).mean(-2)
        self.assertLess(float(lorentz.norm(tangent).max()), FrechetConfig().tol)

    def test_translation_equivariance(self):
        """Test that gyro-translating the batch translates the mean."""
        rng = np.random.default_rng(11)
        for k in (-0.5, -1.0, -2.5):
            pts = lorentz.expmap0(torch.as_tensor(rng.normal(scale=0.6, size=(6, 3)), dtype=DTYPE), k)
            weights = torch.as_tensor(rng.uniform(0.2, 1.0, size=6), dtype=DTYPE)
            shift = lorentz.expmap0(torch.as_tensor(rng.normal(scale=0.8, size=3), dtype=DTYPE), k)

            moved = frechet_mean(lorentz.gyro_add(shift, pts, k), k, weights, TIGHT)
            expected = lorentz.gyro_add(shift, frechet_mean(pts, k, weights, TIGHT), k)
            self.assertLess(float(lorentz.dist(moved, expected, k)), 1e-6)

    def test_permutation_invariance(self):
        """Test that reordering (point, weight) pairs leaves the mean unchanged."""
        k = -1.3
        rng = np.random.default_rng(5)
        pts = lorentz.expmap0(torch.as_tensor(rng.normal(scale=0.7, size=(7, 4)), dtype=DTYPE), k)
        weights = torch.as_tensor(rng.uniform(0.1, 1.0, size=7), dtype=DTYPE)
        mean = frechet_mean(pts, k, weights, TIGHT)
        for _ in range(5):
            order = torch.as_tensor(rng.permutation(7))
            shuffled = frechet_mean(pts[order], k, weights[order], TIGHT)
            self.assertLess(float(lorentz.dist(mean, shuffled, k)), 1e-9)

    def test_objective_beats_every_input_point(self):
        """Test that no input point has a lower objective than the mean."""
        rng = np.random.default_rng(9)
        for _ in range(20):
            k = -float(rng.uniform(0.25, 4.0))
            pts = lorentz.expmap0(torch.as_tensor(rng.normal(scale=0.7, size=(5, 3)), dtype=DTYPE), k)
            weights = torch.as_tensor(rng.uniform(0.1, 1.0, size=5), dtype=DTYPE)
            best = float(frechet_var(pts, frechet_mean(pts, k, weights), k, weights))
            for p in pts:
                self.assertLessEqual(best, float(frechet_var(pts, p, k, weights)) + 1e-12)

    def test_convergence_error(self):
        """Test that an exhausted iteration budget raises with the last iterate."""
        k = -1.0
        pts = lorentz.lift(torch.tensor([[2.0, 0.0], [-2.0, 1.0], [0.0, -3.0]], dtype=DTYPE), k)
        with self.assertRaises(ConvergenceError) as ctx:
            frechet_mean(pts, k, config=FrechetConfig(max_iters=1, tol=1e-14))
        self.assertIsNotNone(ctx.exception.last_iterate)
        self.assertGreater(ctx.exception.grad_norm, 1e-14)

    def test_weight_validation(self):
        """Test that bad weights are rejected."""
        k = -1.0
        pts = lorentz.lift(torch.zeros(2, 2, dtype=DTYPE), k)
        with self.assertRaises(DimensionError):
            frechet_mean(pts, k, torch.ones(3, dtype=DTYPE))
        with self.assertRaises(ParameterError):
            frechet_mean(pts, k, torch.tensor([1.0, -1.0], dtype=DTYPE))
        with self.assertRaises(ParameterError):
            frechet_mean(pts, k, torch.zeros(2, dtype=DTYPE))

    def test_gradient_matches_finite_differences(self):
        """Test that the unrolled solver differentiates correctly in the points."""
        k = -1.0
        space = torch.tensor([[0.3, -0.4], [1.1, 0.2], [-0.5, 0.9]], dtype=DTYPE, requires_grad=True)
        direction = torch.tensor([0.7, -0.2, 0.4], dtype=DTYPE)

        def value(s):
            return (frechet_mean(lorentz.lift(s, k), k, config=TIGHT) * direction).sum()

        value(space).backward()
        h = 1e-6
        numeric = torch.zeros_like(space)
        with torch.no_grad():
            for i in range(space.shape[0]):
                for j in range(space.shape[1]):
                    up = space.detach().clone()
                    up[i, j] += h
                    down = space.detach().clone()
                    down[i, j] -= h
                    numeric[i, j] = (value(up) - value(down)) / (2 * h)
        self.assertLess(float((numeric - space.grad).abs().max()), 1e-6)


class TestFrechetVariance(unittest.TestCase):

    def test_variance(self):
        """Test the weighted variance against direct distances."""
        k = -2.0
        p = P.exp_map_origin([0.5, 0.0], P.Curvature(k))
        q = P.exp_map_origin([-0.5, 0.0], P.Curvature(k))
        batch = P.batch_of([p, q])
        mean = weighted_frechet_mean(batch, [1.0, 1.0])
        self.assertLess(float(mean.coords[1:].abs().max()), 1e-9)
        self.assertAlmostEqual(frechet_variance(batch, None, mean), 0.25, delta=1e-9)
        self.assertAlmostEqual(frechet_variance(batch, [1.0, 0.0], p), 0.0, delta=1e-15)

    def test_single_point_variance(self):
        """Test that a single point has zero variance."""
        pts = lorentz.lift(torch.tensor([[0.4, 0.1]], dtype=DTYPE), -1.0)
        self.assertEqual(float(frechet_var(pts, pts[0], -1.0)), 0.0)

    def test_weight_count(self):
        """Test that the checked API validates the number of weights."""
        batch = P.batch_of([P.exp_map_origin([0.1, 0.0], P.Curvature(-1.0))] * 2)
        with self.assertRaises(DimensionError):
            weighted_frechet_mean(batch, [1.0])


if __name__ == '__main__':
    unittest.main()
