"""Conditional-context learned video codec.

A P-frame codec that estimates and compresses motion, keeps a recurrent
long-term reference chain over reconstructed frames and their features,
mines multi-scale temporal and spatial context from the buffer, fuses the
two, and codes each frame conditionally on the fused context with a real
entropy-coded bitstream.
"""

__version__ = "0.1.0"
