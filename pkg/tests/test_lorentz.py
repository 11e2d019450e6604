"""
Tests for the batched Lorentz kernels.
"""

import math
import unittest

import torch

from hypmoce import lorentz
from hypmoce.lorentz import DTYPE

CURVATURES = (-0.25, -1.0, -4.0)
DIMS = (2, 8, 32)
CASES = 1000


def random_points(count, dim, k, generator, scale=1.0):
    return lorentz.lift(scale * torch.randn(count, dim, dtype=DTYPE, generator=generator), k)


def random_tangents(p, k, generator, max_norm=5.0):
    raw = torch.randn(p.shape, dtype=DTYPE, generator=generator)
    v = lorentz.project_tangent(p, raw, k)
    length = lorentz.norm(v, keepdim=True)
    target = max_norm * torch.rand(p.shape[:-1] + (1,), dtype=DTYPE, generator=generator)
    return v / length * target


class TestGeometrySuite(unittest.TestCase):
    """Randomized invariants over curvatures and dimensions."""

    def setUp(self):
        self.generator = torch.Generator().manual_seed(1234)

    def test_lift_residual(self):
        """Test that lifted points and exp-map outputs satisfy the constraint."""
        for k in CURVATURES:
            for dim in DIMS:
                p = random_points(CASES, dim, k, self.generator)
                self.assertLess(float(lorentz.residual(p, k).max()), 1e-9)
                q = lorentz.expmap(p, random_tangents(p, k, self.generator), k)
                self.assertLess(float(lorentz.residual(q, k).max()), 1e-9)
                self.assertTrue(bool((q[..., 0] > 0).all()))

    def test_exp_log_round_trips(self):
        """Test that log inverts exp and exp inverts log."""
        for k in CURVATURES:
            for dim in DIMS:
                p = random_points(CASES, dim, k, self.generator)
                v = random_tangents(p, k, self.generator)
                back = lorentz.logmap(p, lorentz.expmap(p, v, k), k)
                self.assertLess(float((back - v).abs().max()), 1e-8)

                q = random_points(CASES, dim, k, self.generator)
                again = lorentz.expmap(p, lorentz.logmap(p, q, k), k)
                scale = float(q.abs().max())
                self.assertLess(float((again - q).abs().max()) / max(1.0, scale), 1e-8)

    def test_transport_preserves_inner_products(self):
        """Test that parallel transport is an isometry of tangent spaces."""
        for k in CURVATURES:
            for dim in DIMS:
                p = random_points(CASES, dim, k, self.generator)
                q = random_points(CASES, dim, k, self.generator)
                u = random_tangents(p, k, self.generator, 2.0)
                v = random_tangents(p, k, self.generator, 2.0)
                before = lorentz.inner(u, v)
                after = lorentz.inner(lorentz.transp(p, q, u, k), lorentz.transp(p, q, v, k))
                self.assertLess(float((after - before).abs().max()), 1e-8)

    def test_distance_axioms(self):
        """Test symmetry and the triangle inequality on random triples."""
        for k in CURVATURES:
            for dim in DIMS:
                a, b, c = (random_points(CASES, dim, k, self.generator) for _ in range(3))
                dab = lorentz.dist(a, b, k)
                self.assertTrue(torch.equal(dab, lorentz.dist(b, a, k)))
                self.assertTrue(bool((dab >= 0).all()))
                slack = lorentz.dist(a, c, k) + lorentz.dist(c, b, k) - dab
                self.assertGreater(float(slack.min()), -1e-9)

    def test_gyro_translation_is_isometry(self):
        """Test that p -> (-mu) + p preserves pairwise distances."""
        for k in CURVATURES:
            mu = random_points(CASES, 8, k, self.generator)
            p = random_points(CASES, 8, k, self.generator)
            q = random_points(CASES, 8, k, self.generator)
            shift = lorentz.gyro_inverse(mu)
            before = lorentz.dist(p, q, k)
            after = lorentz.dist(lorentz.gyro_add(shift, p, k), lorentz.gyro_add(shift, q, k), k)
            self.assertLess(float((after - before).abs().max()), 1e-8)

            o = lorentz.origin(8, k, (CASES,))
            moved = lorentz.dist(o, lorentz.gyro_add(shift, p, k), k)
            self.assertLess(float((moved - lorentz.dist(mu, p, k)).abs().max()), 1e-8)


class TestKernels(unittest.TestCase):
    """Closed-form values and limit cases."""

    def test_origin(self):
        """Test that the origin has time coordinate sqrt(-1/k)."""
        self.assertTrue(torch.equal(lorentz.origin(3, -1.0), torch.tensor([1.0, 0, 0, 0], dtype=DTYPE)))
        self.assertAlmostEqual(float(lorentz.origin(2, -4.0)[0]), 0.5, places=15)

    def test_expmap0_closed_form(self):
        """Test that exp at the origin of r*e1 is [cosh r, sinh r, 0]."""
        p = lorentz.expmap0(torch.tensor([0.7, 0.0], dtype=DTYPE), -1.0)
        expected = torch.tensor([math.cosh(0.7), math.sinh(0.7), 0.0], dtype=DTYPE)
        self.assertLess(float((p - expected).abs().max()), 1e-15)

    def test_expmap0_radial_distance(self):
        """Test that |x| = r puts exp_o(x) at distance r from the origin."""
        for k in CURVATURES:
            for r in (0.1, 1.0, 3.0):
                x = torch.tensor([r * 0.6, r * 0.8, 0.0], dtype=DTYPE)
                d = lorentz.dist(lorentz.origin(3, k), lorentz.expmap0(x, k), k)
                self.assertAlmostEqual(float(d), r, delta=1e-9)

    def test_logmap0_inverts_expmap0(self):
        """Test that log_o undoes exp_o, including at zero."""
        x = torch.tensor([[0.3, -1.2], [0.0, 0.0], [1e-9, 0.0]], dtype=DTYPE)
        back = lorentz.logmap0(lorentz.expmap0(x, -2.0), -2.0)
        self.assertLess(float((back - x).abs().max()), 1e-12)

    def test_distance_through_origin(self):
        """Test that exp_o(e1) and exp_o(-e1) are two apart."""
        p = lorentz.expmap0(torch.tensor([1.0, 0.0], dtype=DTYPE), -1.0)
        q = lorentz.expmap0(torch.tensor([-1.0, 0.0], dtype=DTYPE), -1.0)
        self.assertAlmostEqual(float(lorentz.dist(p, q, -1.0)), 2.0, places=12)

    def test_sqdist_gradient_at_coincident_points(self):
        """Test that the squared distance has a finite zero gradient at p = q."""
        p = lorentz.expmap0(torch.tensor([0.4, 0.1], dtype=DTYPE), -1.0).requires_grad_(True)
        value = lorentz.sqdist(p, p.detach(), -1.0)
        value.backward()
        self.assertEqual(float(value), 0.0)
        self.assertTrue(bool(torch.isfinite(p.grad).all()))
        self.assertLess(float(p.grad.abs().max()), 1e-12)

    def test_logmap_of_same_point_is_zero(self):
        """Test that log_p(p) is exactly the zero vector."""
        p = lorentz.expmap0(torch.tensor([0.5, -0.5, 0.2], dtype=DTYPE), -1.5)
        self.assertLess(float(lorentz.logmap(p, p, -1.5).abs().max()), 1e-12)

    def test_geodesic_endpoints_and_midpoint(self):
        """Test that the geodesic starts at p, ends at q and halves the distance at t=1/2."""
        k = -0.5
        p = lorentz.expmap0(torch.tensor([0.5, 0.2], dtype=DTYPE), k)
        q = lorentz.expmap0(torch.tensor([-1.0, 0.7], dtype=DTYPE), k)
        self.assertLess(float((lorentz.geodesic(p, q, 0.0, k) - p).abs().max()), 1e-12)
        self.assertLess(float((lorentz.geodesic(p, q, 1.0, k) - q).abs().max()), 1e-9)
        mid = lorentz.geodesic(p, q, 0.5, k)
        self.assertAlmostEqual(float(lorentz.dist(p, mid, k)), float(lorentz.dist(mid, q, k)), delta=1e-9)

    def test_rescale_preserves_tangent_direction(self):
        """Test that rescaling scales the origin distance by sqrt(k_old/k_new)."""
        p = lorentz.expmap0(torch.tensor([0.8, -0.3], dtype=DTYPE), -1.0)
        moved = lorentz.rescale(p, -1.0, -4.0)
        self.assertLess(float(lorentz.residual(moved, -4.0)), 1e-12)
        d_old = float(lorentz.dist(lorentz.origin(2, -1.0), p, -1.0))
        d_new = float(lorentz.dist(lorentz.origin(2, -4.0), moved, -4.0))
        self.assertAlmostEqual(d_new, d_old * 0.5, delta=1e-12)

    def test_curvature_gradient_flows(self):
        """Test that the distance is differentiable in the curvature."""
        k = torch.tensor(-1.0, dtype=DTYPE, requires_grad=True)
        p = lorentz.expmap0(torch.tensor([0.5, 0.0], dtype=DTYPE), k)
        lorentz.dist(lorentz.origin(2, k), p, k).backward()
        self.assertTrue(bool(torch.isfinite(k.grad)))


if __name__ == '__main__':
    unittest.main()
