"""Annotated numpy array types usable as pydantic fields."""

from typing import Annotated

import numpy as np
from pydantic import BeforeValidator, PlainSerializer


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _as_float_array(value) -> np.ndarray:
    return _frozen(np.array(value, dtype=np.float64))


def _as_int_array(value) -> np.ndarray:
    return _frozen(np.array(value, dtype=np.int64))


FloatArray = Annotated[
    np.ndarray,
    BeforeValidator(_as_float_array),
    PlainSerializer(lambda a: a.tolist(), return_type=list),
]

IntArray = Annotated[
    np.ndarray,
    BeforeValidator(_as_int_array),
    PlainSerializer(lambda a: a.tolist(), return_type=list),
]
