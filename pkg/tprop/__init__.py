"""
tprop

Difference target propagation and its baselines: layer-local training of deep
networks through learned inverse mappings, plus numerical checks of the
method's convergence and angle guarantees.
"""

__version__ = "1.0.0"
