"""Graph transformer toolkit: RRWP encodings, GD-WL refinement, a tape autodiff
engine, the GRIT attention block, exact expressivity checks and the synthetic
k-hop attention study."""

__version__ = "0.1.0"
