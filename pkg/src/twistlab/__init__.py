"""Numerical toolkit for area-preserving annulus twist maps.

Builds strip and annulus diffeomorphisms from generating functions,
including a smooth (non-analytic) map whose rigid horizontal translations
by an explicit sequence eps_k -> 0 keep interior fixed points, in contrast
with the analytic members of the catalog; provides fixed-point detection
over translation sweeps and computational primitives for Brouwer-line
constructions of fixed-point-free plane homeomorphisms.
"""

from . import brouwer, construction, dynamics, genfun, geom, verify  # noqa: F401

__version__ = "0.1.0"
