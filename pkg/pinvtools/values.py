"""
Runtime values flowing through graphs.

A value is a Python ``float`` (Real), ``int`` (Int), ``bool`` (Bool), a
``numpy.ndarray`` of float64 (Tensor) or the :data:`UNDEFINED` sentinel.
Undefined propagates through every operation.
"""

import math
from typing import Any, Tuple

import numpy as np

from .utils.validation import TypeMismatch


class Undefined:
    """The undefined value. There is exactly one instance, :data:`UNDEFINED`."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNDEFINED"

    def __reduce__(self):
        return (Undefined, ())


UNDEFINED = Undefined()

SCALAR_TYPES = (bool, int, float, np.bool_, np.integer, np.floating)


def is_undefined(value: Any) -> bool:
    return value is UNDEFINED


def any_undefined(values) -> bool:
    return any(v is UNDEFINED for v in values)


def is_tensor(value: Any) -> bool:
    return isinstance(value, np.ndarray)


def is_bool(value: Any) -> bool:
    return isinstance(value, (bool, np.bool_))


def check_value(value: Any, where: str = "value") -> Any:
    """
    Normalize a host value to the runtime representation.

    numpy scalars become Python scalars and lists become float tensors.

    Raises:
        TypeMismatch: For anything that is not a supported value.
    """
    if value is UNDEFINED:
        return value
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    if isinstance(value, np.ndarray):
        if value.dtype != np.float64:
            return value.astype(np.float64)
        return value
    if isinstance(value, (list, tuple)):
        try:
            return np.asarray(value, dtype=np.float64)
        except (TypeError, ValueError) as e:
            raise TypeMismatch(f"{where}: cannot convert {value!r} to a tensor") from e
    raise TypeMismatch(f"{where}: unsupported value type {type(value).__name__}")


def shape_of(value: Any) -> Tuple[int, ...]:
    """Shape of a value; scalars have shape ``()``."""
    if isinstance(value, np.ndarray):
        return tuple(int(d) for d in value.shape)
    return ()


def dtype_of(value: Any) -> str:
    """Type tag of a value: ``bool``, ``int``, ``real``, ``tensor`` or ``undefined``."""
    if value is UNDEFINED:
        return "undefined"
    if isinstance(value, np.ndarray):
        return "tensor"
    if is_bool(value):
        return "bool"
    if isinstance(value, (int, np.integer)):
        return "int"
    return "real"


def is_finite_value(value: Any) -> bool:
    if value is UNDEFINED:
        return False
    if isinstance(value, np.ndarray):
        return bool(np.all(np.isfinite(value)))
    return math.isfinite(float(value))


def values_equal(a: Any, b: Any) -> bool:
    """Exact equality that also works for tensors (used by structural graph equality)."""
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        if not (isinstance(a, np.ndarray) and isinstance(b, np.ndarray)):
            return False
        return a.shape == b.shape and bool(np.array_equal(a, b))
    if type(a) is not type(b):
        return False
    return a == b


def value_to_json(value: Any) -> Any:
    """Convert a value to a JSON-compatible object (``None`` for undefined)."""
    if value is UNDEFINED:
        return None
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    return float(value)


def value_from_json(obj: Any, where: str = "value") -> Any:
    """Inverse of :func:`value_to_json`."""
    if obj is None:
        return UNDEFINED
    return check_value(obj, where)
