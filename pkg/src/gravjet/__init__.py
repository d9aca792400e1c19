"""Numerical engine for the multisymplectic Einstein-Hilbert field theory on jets of metrics."""

import jax

jax.config.update("jax_enable_x64", True)

__version__ = "0.1.0"
