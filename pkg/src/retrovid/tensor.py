"""Video clips as 4-D tensors with explicit memory layouts.

A clip spans four axes: frames (T), colour channels (C), rows (H) and
columns (W). The payload stays contiguous in one of two axis orders, TCHW
or CTHW, and every operation preserves the input's layout tag instead of
normalizing to a canonical order, so pipelines never pay for hidden
copies.

The three clip transforms here are self-invertible: applying the same one
twice returns the original clip bit for bit. All operations are pure and
never mutate their inputs; results may share the input buffer when no
elements move, so treat tensors as immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigurationError, ValidationError


class Layout(str, Enum):
    """Axis order of the payload, outermost axis first."""

    TCHW = "TCHW"
    CTHW = "CTHW"

    @classmethod
    def parse(cls, value: "Layout | str") -> "Layout":
        if isinstance(value, Layout):
            return value
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise ConfigurationError(f"unknown layout {value!r}") from None


class TransformId(str, Enum):
    """The supported self-invertible clip transforms.

    HFTR is fixed as horizontal flip first, then time reversal; the two
    commute, so the order is only a determinism convention.
    """

    HF = "HF"
    TR = "TR"
    HFTR = "HFTR"

    @classmethod
    def parse(cls, value: "TransformId | str") -> "TransformId":
        if isinstance(value, TransformId):
            return value
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise ConfigurationError(f"unknown transform {value!r}") from None


_SUPPORTED_DTYPES = (np.dtype(np.uint8), np.dtype(np.float32))


@dataclass(frozen=True, eq=False)
class FrameTensor:
    """A video clip: a contiguous buffer plus the layout it is stored in.

    ``data`` axes follow ``layout``, so the array shape is (T, C, H, W)
    for TCHW and (C, T, H, W) for CTHW. :meth:`dims` always reports the
    logical (T, C, H, W) sizes regardless of layout.
    """

    data: np.ndarray
    layout: Layout = Layout.TCHW

    def __post_init__(self):
        object.__setattr__(self, "layout", Layout.parse(self.layout))
        arr = np.asarray(self.data)
        if arr.ndim != 4:
            raise ValidationError(f"clip tensor must have 4 axes, got {arr.ndim}")
        if arr.dtype not in _SUPPORTED_DTYPES:
            raise ValidationError(
                f"unsupported dtype {arr.dtype}; expected uint8 or float32"
            )
        if any(s < 1 for s in arr.shape):
            raise ValidationError(f"all dims must be positive, got shape {arr.shape}")
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_payload(cls, payload, dims, dtype, layout) -> "FrameTensor":
        """Build a tensor from a flat payload in declared layout order.

        ``dims`` is always the logical (T, C, H, W) tuple, whatever the
        layout. Raises :class:`ValidationError` when the payload length
        does not equal T*C*H*W.
        """
        layout = Layout.parse(layout)
        t, c, h, w = (int(d) for d in dims)
        if min(t, c, h, w) < 1:
            raise ValidationError(f"all dims must be positive, got {(t, c, h, w)}")
        flat = np.asarray(payload, dtype=dtype).reshape(-1)
        if flat.size != t * c * h * w:
            raise ValidationError(
                f"payload has {flat.size} elements, dims {(t, c, h, w)} "
                f"require {t * c * h * w}"
            )
        shape = (t, c, h, w) if layout is Layout.TCHW else (c, t, h, w)
        return cls(flat.reshape(shape), layout)

    @classmethod
    def from_logical(cls, array, layout: Layout | str = Layout.TCHW) -> "FrameTensor":
        """Build a tensor from a (T, C, H, W)-indexed array, storing it in ``layout``."""
        layout = Layout.parse(layout)
        arr = np.asarray(array)
        if arr.ndim != 4:
            raise ValidationError(f"clip tensor must have 4 axes, got {arr.ndim}")
        if layout is Layout.CTHW:
            arr = np.swapaxes(arr, 0, 1)
        return cls(np.ascontiguousarray(arr), layout)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        """Logical (T, C, H, W) sizes."""
        s = self.data.shape
        if self.layout is Layout.TCHW:
            return (s[0], s[1], s[2], s[3])
        return (s[1], s[0], s[2], s[3])

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def payload(self) -> np.ndarray:
        """The flat element buffer in declared layout order (a view)."""
        return self.data.reshape(-1)

    def payload_bytes(self) -> bytes:
        return self.data.tobytes()

    def logical(self) -> np.ndarray:
        """A (T, C, H, W)-indexed view of the clip."""
        if self.layout is Layout.TCHW:
            return self.data
        return np.swapaxes(self.data, 0, 1)

    def equals(self, other: "FrameTensor") -> bool:
        """Bit-exact equality: same dims, dtype, layout and payload bytes."""
        return (
            isinstance(other, FrameTensor)
            and self.layout is other.layout
            and self.dtype == other.dtype
            and self.dims == other.dims
            and self.payload_bytes() == other.payload_bytes()
        )

    def __repr__(self) -> str:
        t, c, h, w = self.dims
        return (
            f"FrameTensor(dims=(T={t}, C={c}, H={h}, W={w}), "
            f"dtype={self.dtype.name}, layout={self.layout.value})"
        )


def _time_axis(layout: Layout) -> int:
    return 0 if layout is Layout.TCHW else 1


def time_reverse(v: FrameTensor) -> FrameTensor:
    """Reverse the frame order: output frame t is input frame T-1-t."""
    flipped = np.flip(v.data, axis=_time_axis(v.layout))
    return FrameTensor(np.ascontiguousarray(flipped), v.layout)


def horizontal_flip(v: FrameTensor) -> FrameTensor:
    """Mirror each frame left-right: output column w is input column W-1-w."""
    flipped = np.flip(v.data, axis=3)
    return FrameTensor(np.ascontiguousarray(flipped), v.layout)


def apply_transform(v: FrameTensor, transform: TransformId | str) -> FrameTensor:
    """Apply one of the named transforms; HFTR flips first, then reverses."""
    transform = TransformId.parse(transform)
    if transform is TransformId.HF:
        return horizontal_flip(v)
    if transform is TransformId.TR:
        return time_reverse(v)
    return time_reverse(horizontal_flip(v))


def convert_layout(v: FrameTensor, target: Layout | str) -> FrameTensor:
    """Physically reorder the payload into ``target`` layout.

    The logical content is unchanged; converting back restores the
    original payload bit for bit. An identity conversion returns the
    input tensor itself.
    """
    target = Layout.parse(target)
    if target is v.layout:
        return v
    return FrameTensor(np.ascontiguousarray(np.swapaxes(v.data, 0, 1)), target)


def misinterpret_layout(v: FrameTensor, assumed: Layout | str) -> FrameTensor:
    """Relabel the payload as ``assumed`` layout without moving any bytes.

    This reproduces the loader bug where a buffer written in one layout is
    reshaped under the other layout's axis order with no transposition:
    the result's frame slices mix channels across time. With
    ``assumed == v.layout`` this is the identity.
    """
    assumed = Layout.parse(assumed)
    if assumed is v.layout:
        return v
    t, c, h, w = v.dims
    shape = (t, c, h, w) if assumed is Layout.TCHW else (c, t, h, w)
    return FrameTensor(v.payload().reshape(shape), assumed)
