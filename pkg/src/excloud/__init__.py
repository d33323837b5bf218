"""Semi-infinite exclusion process with particle-wise rates.

The process is studied through its gap process, a Jackson network of
queues: ``traffic`` solves the stable traffic equation, ``walk`` handles the
dual customer walk, ``engine`` simulates the gaps exactly, ``coupling``
builds graphical couplings, ``oracle`` solves small truncations exactly and
``stats`` turns trajectories into estimates.
"""

from .rates import (
    GOLDEN,
    RateEnvironment,
    dog_and_n_sheep,
    dog_sheep,
    factorial,
    homogeneous,
    one_sheep_many_dogs,
)

__version__ = "0.1.0"

__all__ = [
    "GOLDEN",
    "RateEnvironment",
    "dog_and_n_sheep",
    "dog_sheep",
    "factorial",
    "homogeneous",
    "one_sheep_many_dogs",
]
