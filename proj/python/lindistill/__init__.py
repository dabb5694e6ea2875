"""Layerwise distillation of transformers into linear-time students.

Thin bindings over the C++ library: task generation, models, model
surgery, losses, distillation runs, checkpoints and analysis helpers.
"""

from ._lindistill import *  # noqa: F401,F403
from ._lindistill import __doc__  # noqa: F401
