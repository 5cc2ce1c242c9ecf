"""Skew-product dynamics near a parabolic-resonant critical fiber.

Maps ``F(t, z) = (mu t, g(t, z))`` with a repelling fixed point in the base
fiber, their Koenigs-type limits, the degenerate resonance condition, nesting
disks in the critical fibers and escape-time pictures of those fibers.
"""

__version__ = "0.1.0"
