"""Distance-weighted group regularization and structured pruning."""

from ._etp import *  # noqa: F401,F403
from ._etp import __doc__  # noqa: F401
