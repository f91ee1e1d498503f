"""Course assignment with bundled random mechanisms.

Bundle preference elicitation, Bundled Probabilistic Serial, Bundled Random
Serial Dictatorship, lottery decomposition with iterative rounding, and the
metrics used to compare the outcomes.
"""

__version__ = "0.1.0"
