"""Linear probing versus fine-tuning on two-layer linear networks.

Submodules: :mod:`fdlab.subspace` (principal angles and extractor distance),
:mod:`fdlab.problem` (seeded instances), :mod:`fdlab.flow` (gradient flows),
:mod:`fdlab.harness` (numerical checks of the bounds) and :mod:`fdlab.cli`.
"""

__version__ = "0.1.0"
