"""Approximate counting of 0/1-knapsack solutions.

The package splits along the algorithm's seams: exact oracles for small
instances, extended-exponent floats, convolution engines, the sampler
tree, the two estimation pipelines, and the second-phase solver for
tiny items.  `knapcount.cli` is the command-line front door.
"""

from .instance import (
    AlgoParams,
    DomainError,
    InstanceError,
    KnapsackInstance,
    ParseError,
    WeightOverCapacityError,
    generate,
    instance_digest,
    parse_instance,
    serialize_instance,
)
from .estimator import EstimateReport, estimate_dyer, estimate_subquadratic
from .oracle import count_band, count_dp, count_enum
from .xfloat import XReal

__version__ = "0.1.0"

__all__ = [
    "AlgoParams",
    "DomainError",
    "EstimateReport",
    "InstanceError",
    "KnapsackInstance",
    "ParseError",
    "WeightOverCapacityError",
    "XReal",
    "count_band",
    "count_dp",
    "count_enum",
    "estimate_dyer",
    "estimate_subquadratic",
    "generate",
    "instance_digest",
    "parse_instance",
    "serialize_instance",
    "__version__",
]
