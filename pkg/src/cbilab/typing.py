# Copyright (c) 2023 Massachusetts Institute of Technology
# SPDX-License-Identifier: MIT
from typing import Union

import numpy as np
from numpy.typing import NDArray
from typing_extensions import Protocol, TypeAlias, runtime_checkable

__all__ = ["FloatArray", "ArrayLike", "Integrand"]

FloatArray: TypeAlias = NDArray[np.float64]
ArrayLike: TypeAlias = Union[float, FloatArray]


@runtime_checkable
class Integrand(Protocol):  # pragma: no cover
    """A real function that accepts and returns arrays of float64.

    All integration routines evaluate integrands on whole node sets at once, so
    scalar-only callables must be wrapped with `numpy.vectorize` first.
    """

    def __call__(self, __z: FloatArray) -> FloatArray:
        ...
