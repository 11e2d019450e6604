"""
hypmoce Package

Hyperbolic mixture-of-curvature experts: Lorentz-manifold primitives,
hyperbolic layers, curvature-oriented cross-modal fusion, δ-hyperbolicity
analysis and a grouped cross-validation training pipeline.
"""

__version__ = "0.1.0"
__description__ = "Hyperbolic mixture-of-curvature experts for multimodal classification"
