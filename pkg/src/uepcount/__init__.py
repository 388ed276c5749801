"""Count-interval quantization for patch-wise crowd counting.

Density maps and local counts (:mod:`uepcount.density`), uniform-error
interval partitions (:mod:`uepcount.partition`), mean count proxies and
interleaved heads (:mod:`uepcount.proxies`), encoding/decoding and error
accounting (:mod:`uepcount.quantize`), and noisy-classifier simulation
(:mod:`uepcount.simulate`).
"""

from .density import *  # noqa: F401,F403
from .errors import DataError, FormatVersionError, InfeasiblePartitionError, ParameterError, UepError
from .partition import *  # noqa: F401,F403
from .proxies import *  # noqa: F401,F403
from .quantize import *  # noqa: F401,F403
from .simulate import *  # noqa: F401,F403

__version__ = "0.1.0"
