"""fblab: a desk-scale numerical laboratory for two linked free-boundary
problems (porous-medium-type growth and its stiff incompressible limit) and
for the power concavity of their pressures."""

__version__ = "0.1.0"

from . import concavity, counterexamples, estimates, grid, heleshaw, pme, reaction  # noqa: F401
