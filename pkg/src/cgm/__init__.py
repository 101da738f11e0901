"""Corner growth, tandem queues and stationary cocycles on the planar lattice."""

from .env import Environment, WeightFamily, sample_environment, translate
from .lpp import last_passage, passage_table, point_to_line
from .shape import SolvableModel

__all__ = ["Environment", "WeightFamily", "sample_environment", "translate", "last_passage",
           "passage_table", "point_to_line", "SolvableModel"]
__version__ = "0.1.0"
