"""Inversion and editing toolkit for a frozen toy style-based generator.

The package is organized around the inversion ladder w -> w+ -> f:

- ``generator``: frozen style-based synthesis network (the inversion target).
- ``alignment``: contrastive image/latent alignment, later frozen as a loss.
- ``encoder``: pyramid encoder with cross-attention refinement of w+ and f.
- ``training``: loss suite and the encoder training loop.
- ``editing``: semantic direction discovery and latent/feature edits.
- ``baselines``: per-image latent optimization comparator.
- ``metrics`` / ``evaluation``: reconstruction metrics and report harness.
- ``service`` / ``cli``: HTTP editing service and the command line client.
"""

__version__ = "0.1.0"
