"""
Tests for curvature-oriented cross-modal fusion.
"""

import math
import unittest

import torch

from hypmoce import lorentz
from hypmoce import points as P
from hypmoce.errors import DimensionError, GeometryError
from hypmoce.fusion import (
    CrossModalAttention,
    CurvatureFusion,
    EuclideanFusion,
    ModalitySet,
    attention_weights,
    curvature_prior,
    curvature_temperature,
    fusion_curvature,
    project_between_manifolds,
)
from hypmoce.lorentz import DTYPE


def tokens(batch, count, dim, k, seed=0):
    g = torch.Generator().manual_seed(seed)
    return lorentz.lift(0.6 * torch.randn(batch, count, dim, dtype=DTYPE, generator=g), k)


class TestFusionHelpers(unittest.TestCase):

    def test_fusion_curvature(self):
        """Test that the fusion curvature is the mean of the modality curvatures."""
        self.assertAlmostEqual(float(fusion_curvature(torch.tensor([-1.0, -3.0], dtype=DTYPE))), -2.0)
        with self.assertRaises(DimensionError):
            fusion_curvature(torch.tensor([], dtype=DTYPE))

    def test_projection_between_manifolds(self):
        """Test that projection lands on the target manifold and scales origin distances."""
        p = lorentz.expmap0(torch.tensor([0.6, -0.2], dtype=DTYPE), -0.5)
        moved = project_between_manifolds(p, -0.5, -2.0)
        self.assertLess(float(lorentz.residual(moved, -2.0)), 1e-12)
        before = float(lorentz.dist(lorentz.origin(2, -0.5), p, -0.5))
        after = float(lorentz.dist(lorentz.origin(2, -2.0), moved, -2.0))
        self.assertAlmostEqual(after, before * 0.5, delta=1e-12)
        self.assertTrue(torch.allclose(project_between_manifolds(p, -0.5, -0.5), p, atol=1e-15))

    def test_temperature_and_prior_monotone(self):
        """Test that temperature falls and the prior rises with |K|."""
        grid = torch.tensor([-0.1, -0.5, -1.0, -4.0, -10.0], dtype=DTYPE)
        tau = curvature_temperature(grid, 1.0)
        prior = curvature_prior(grid)
        self.assertTrue(bool((tau[1:] < tau[:-1]).all()))
        self.assertTrue(bool((prior[1:] > prior[:-1]).all()))
        self.assertAlmostEqual(float(curvature_temperature(-4.0, 2.0)), 1.0)


class TestAttentionWeights(unittest.TestCase):

    def setUp(self):
        self.k = -1.0
        self.query = lorentz.origin(2, self.k)
        self.keys = lorentz.expmap0(torch.tensor([[0.2, 0.0], [0.0, 0.8], [-1.5, 0.0]], dtype=DTYPE), self.k)

    def test_simplex(self):
        """Test that weights are non-negative and sum to one."""
        w = attention_weights(self.query, self.keys, self.k, torch.tensor(1.0, dtype=DTYPE))
        self.assertTrue(bool((w >= 0).all()))
        self.assertAlmostEqual(float(w.sum()), 1.0, places=12)
        self.assertEqual(int(torch.argmax(w)), 0)

    def test_sharper_at_lower_temperature(self):
        """Test that the nearest key gains weight as the temperature drops."""
        nearest = [
            float(attention_weights(self.query, self.keys, self.k, torch.tensor(tau, dtype=DTYPE))[0])
            for tau in (4.0, 2.0, 1.0, 0.5, 0.25)
        ]
        self.assertEqual(nearest, sorted(nearest))
        self.assertLess(nearest[0], nearest[-1])

    def test_sharper_at_higher_curvature(self):
        """Test that the weight gap between two keys at fixed distances widens with |K|."""
        gaps = []
        for k in (-0.5, -1.0, -2.0, -4.0):
            query = lorentz.origin(2, k)
            keys = lorentz.expmap0(torch.tensor([[0.3, 0.0], [0.0, 0.6]], dtype=DTYPE), k)
            w = attention_weights(query, keys, k, curvature_temperature(k, 1.0))
            gaps.append(float(w[0] - w[1]))
        self.assertTrue(all(a < b for a, b in zip(gaps, gaps[1:])))
        self.assertGreater(gaps[0], 0.0)

    def test_prior_favours_curved_keys(self):
        """Test that with equidistant keys the prior ranks keys by |K|."""
        keys = lorentz.expmap0(torch.tensor([[0.5, 0.0], [0.0, 0.5], [-0.5, 0.0]], dtype=DTYPE), self.k)
        prior = curvature_prior(torch.tensor([-0.5, -2.0, -8.0], dtype=DTYPE))
        w = attention_weights(
            self.query, keys, self.k, torch.tensor(1.0, dtype=DTYPE), prior=prior, strength=torch.tensor(0.3)
        )
        self.assertLess(float(w[0]), float(w[1]))
        self.assertLess(float(w[1]), float(w[2]))

    def test_mask(self):
        """Test that masked keys get exactly zero weight."""
        mask = torch.tensor([True, False, False])
        w = attention_weights(self.query, self.keys, self.k, torch.tensor(1.0, dtype=DTYPE), mask=mask)
        self.assertEqual(float(w[0]), 0.0)
        self.assertAlmostEqual(float(w.sum()), 1.0, places=12)

    def test_no_keys(self):
        """Test that an empty key set is rejected."""
        with self.assertRaises(DimensionError):
            attention_weights(self.query, torch.empty(0, 3, dtype=DTYPE), self.k, torch.tensor(1.0, dtype=DTYPE))


class TestCrossModalAttention(unittest.TestCase):

    def setUp(self):
        torch.manual_seed(0)

    def test_layer_output(self):
        """Test output shape, manifold membership and the masked diagonal."""
        layer = CrossModalAttention(3, heads=2)
        x = tokens(5, 3, 3, -1.5)
        tau = curvature_temperature(torch.tensor([-1.0, -1.5, -2.0], dtype=DTYPE), 1.0)
        out, weights = layer(x, -1.5, tau)
        self.assertEqual(out.shape, (5, 3, 4))
        self.assertEqual(weights.shape, (5, 2, 3, 3))
        self.assertLess(float(lorentz.residual(out, -1.5).max()), 1e-9)
        diagonal = torch.diagonal(weights, dim1=-2, dim2=-1)
        self.assertTrue(bool((diagonal == 0).all()))
        self.assertTrue(torch.allclose(weights.sum(-1), torch.ones(5, 2, 3, dtype=DTYPE)))

    def test_two_modalities_attend_to_each_other(self):
        """Test that with two modalities each attends fully to the other."""
        layer = CrossModalAttention(3, heads=1)
        _, weights = layer(tokens(4, 2, 3, -1.0), -1.0, torch.ones(2, dtype=DTYPE))
        expected = torch.tensor([[0.0, 1.0], [1.0, 0.0]], dtype=DTYPE).expand(4, 1, 2, 2)
        self.assertTrue(torch.equal(weights, expected))

    def test_needs_two_modalities(self):
        """Test that a single token cannot attend."""
        with self.assertRaises(DimensionError):
            CrossModalAttention(3, heads=1)(tokens(2, 1, 3, -1.0), -1.0, torch.ones(1, dtype=DTYPE))


class TestCurvatureFusion(unittest.TestCase):

    def setUp(self):
        torch.manual_seed(0)
        self.curvatures = torch.tensor([-0.5, -2.0, -3.5], dtype=DTYPE)
        self.reps = [tokens(6, 1, 4, float(k), seed=i)[:, 0] for i, k in enumerate(self.curvatures)]

    def test_forward(self):
        """Test that the fused point lies on the mean-curvature manifold."""
        fusion = CurvatureFusion(4, layers=2, heads=2)
        fused, k_fusion, attention = fusion(self.reps, self.curvatures, return_attention=True)
        self.assertAlmostEqual(float(k_fusion), -2.0)
        self.assertEqual(fused.shape, (6, 5))
        self.assertLess(float(lorentz.residual(fused, k_fusion).max()), 1e-9)
        self.assertEqual(len(attention), 2)
        self.assertAlmostEqual(float(fusion.strength), 0.3, places=12)

    def test_gradients_reach_curvatures_and_prior(self):
        """Test that the fused output is differentiable in curvatures and lambda."""
        fusion = CurvatureFusion(4, layers=1, heads=1)
        curvatures = self.curvatures.clone().requires_grad_(True)
        fused, _ = fusion(self.reps, curvatures)
        fused[..., 1:].sum().backward()
        self.assertTrue(bool(torch.isfinite(curvatures.grad).all()))
        self.assertIsNotNone(fusion.lambda_raw.grad)

    def test_single_modality(self):
        """Test that one modality skips attention and is pooled directly."""
        fusion = CurvatureFusion(4, layers=2, heads=2)
        k = self.curvatures[:1]
        fused, k_fusion, attention = fusion(self.reps[:1], k, return_attention=True)
        self.assertEqual(attention, [])
        self.assertAlmostEqual(float(k_fusion), -0.5)
        expected = fusion.output(self.reps[0], -0.5)
        self.assertTrue(torch.allclose(fused, expected, atol=1e-12))

    def test_fuse_modality_set(self):
        """Test the checked single-sample fusion."""
        fusion = CurvatureFusion(4, layers=1, heads=1)
        curvatures = tuple(P.Curvature(float(k)) for k in self.curvatures)
        reps = tuple(P.LorentzPoint(r[0], c) for r, c in zip(self.reps, curvatures))
        fused = fusion.fuse(ModalitySet(("a", "b", "c"), curvatures, reps))
        self.assertAlmostEqual(fused.curvature.value, -2.0)
        self.assertEqual(fused.dim, 4)

    def test_modality_set_validation(self):
        """Test that modality sets reject inconsistent inputs."""
        k1, k2 = P.Curvature(-1.0), P.Curvature(-2.0)
        p1 = P.LorentzPoint.origin(2, k1)
        with self.assertRaises(GeometryError):
            ModalitySet(("a",), (k2,), (p1,))
        with self.assertRaises(DimensionError):
            ModalitySet(("a", "a"), (k1, k1), (p1, p1))
        with self.assertRaises(DimensionError):
            ModalitySet(("a", "b"), (k1,), (p1,))


class TestEuclideanFusion(unittest.TestCase):

    def test_forward(self):
        """Test the flat control's shapes and masked attention."""
        torch.manual_seed(0)
        fusion = EuclideanFusion(4, layers=2, heads=2)
        reps = [torch.randn(5, 4, dtype=DTYPE) for _ in range(3)]
        fused, attention = fusion(reps, return_attention=True)
        self.assertEqual(fused.shape, (5, 4))
        self.assertEqual(len(attention), 2)
        self.assertEqual(attention[0].shape, (5, 2, 3, 3))
        self.assertTrue(bool((torch.diagonal(attention[0], dim1=-2, dim2=-1) == 0).all()))

    def test_single_modality(self):
        """Test that one modality bypasses attention."""
        fusion = EuclideanFusion(4, layers=1, heads=1)
        x = torch.randn(3, 4, dtype=DTYPE)
        fused, attention = fusion([x], return_attention=True)
        self.assertEqual(attention, [])
        self.assertTrue(torch.allclose(fused, fusion.output(x)))
        self.assertFalse(math.isnan(float(fused.sum())))


if __name__ == '__main__':
    unittest.main()
