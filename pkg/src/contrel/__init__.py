"""Class-incremental relation classification with a decomposed classifier head.

Training follows the two-stage rehearsal recipe: stage 1 fits each task's new
relations while the previous classifier columns move at a reduced learning
rate, stage 2 replays a small balanced memory after those columns are restored
from a snapshot taken before stage 1.
"""

from .backend import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
