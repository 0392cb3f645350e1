"""Grid-resident field containers.

A :class:`GridField` is a batch of multi-channel 2D scalar fields stored
row-major as ``(batch, channels, height, width)``.  A
:class:`DisplacementField` carries one 2-vector per pixel and feature
channel, stored as ``(batch, channels, 2, height, width)`` where component 0
is the row displacement and component 1 the column displacement, both in
pixel units (row 0 is the top of the image).

Both containers are immutable and validate finiteness on construction;
operator modules work on the raw arrays and wrap results back at API
boundaries.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError

_FLOAT_DTYPES = (np.float32, np.float64)


def _validate(data: np.ndarray, ndim: int, what: str) -> np.ndarray:
    data = np.asarray(data)
    if data.dtype not in _FLOAT_DTYPES:
        data = data.astype(np.float64)
    if data.ndim != ndim:
        raise ShapeMismatchError(f"{what} expects {ndim} axes", data.shape, (ndim,) * ndim)
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{what} contains non-finite entries")
    return data


@dataclass(frozen=True)
class GridField:
    """Batch of c-channel H×W scalar fields, row-major (batch, channel, row, col)."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _validate(self.data, 4, "GridField"))

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @classmethod
    def zeros(cls, batch: int, channels: int, height: int, width: int,
              dtype=np.float64) -> "GridField":
        return cls(np.zeros((batch, channels, height, width), dtype=dtype))


@dataclass(frozen=True)
class DisplacementField:
    """Per-channel pixel displacements, (batch, channels, 2, row, col).

    ``channels`` is either 1 (one flow shared by every feature channel) or
    equal to the transported field's channel count.
    """

    data: np.ndarray

    def __post_init__(self):
        data = _validate(self.data, 5, "DisplacementField")
        if data.shape[2] != 2:
            raise ShapeMismatchError("DisplacementField needs 2 components per channel",
                                     data.shape, (data.shape[0], data.shape[1], 2,
                                                  data.shape[3], data.shape[4]))
        object.__setattr__(self, "data", data)

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[3]

    @property
    def width(self) -> int:
        return self.data.shape[4]

    @classmethod
    def zeros(cls, batch: int, channels: int, height: int, width: int,
              dtype=np.float64) -> "DisplacementField":
        return cls(np.zeros((batch, channels, 2, height, width), dtype=dtype))


class PushMode(enum.Enum):
    """Transport discretization: forward splat (mass) or backward gather (color)."""

    MASS = "mass"
    COLOR = "color"

    @classmethod
    def parse(cls, name: "str | PushMode") -> "PushMode":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise ValueError(f"unknown push mode {name!r}; expected 'mass' or 'color'") from None
