"""Optimization on Tucker tensor varieties.

Tangent-cone geometry of bounded-Tucker-rank tensors, approximate and
partial projections, and the GRAP, rfGRAP and TRAM line-search solvers,
with a tensor-completion objective that never densifies sparse data.
"""

from .tucker import TuckerTensor, hosvd, random_tucker, retract_hosvd, to_dense

__version__ = "0.1.0"

__all__ = ["TuckerTensor", "hosvd", "random_tucker", "retract_hosvd", "to_dense", "__version__"]
