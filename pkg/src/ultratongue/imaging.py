"""Image-domain primitives for ultrasound frames.

Raw scanline frames are stored as ``(height, width)`` arrays, i.e. one row
per scanline (64) and one column per depth sample (842). Resizing to 64x64
therefore only decimates the depth axis.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ContractError, SizeError, ValidationError

RAW255 = "raw255"
UNIT = "unit"
FRAME_SHAPE = (64, 64)
FRAME_SIZE = FRAME_SHAPE[0] * FRAME_SHAPE[1]
CATMULL_ROM_A = -0.5
_BOUNDS = {RAW255: 255.0, UNIT: 1.0}
_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Frame:
    """A grayscale frame of real intensities with an explicit scale tag."""

    pixels: np.ndarray
    scale: str = RAW255

    def __post_init__(self):
        if self.scale not in _BOUNDS:
            raise ValidationError(f"unknown scale tag {self.scale!r}")
        px = np.array(self.pixels, dtype=np.float64)
        if px.ndim != 2:
            raise SizeError(f"frame must be 2-D, got shape {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValidationError("frame contains non-finite pixels")
        hi = _BOUNDS[self.scale]
        if px.size and (px.min() < -_TOL or px.max() > hi + _TOL):
            raise ValidationError(f"pixels outside [0, {hi:g}] for scale {self.scale}")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def shape(self):
        return self.pixels.shape

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return self.scale == other.scale and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


# Frames produced by the pipeline are 64x64; the type itself admits any size.
Frame64 = Frame


def cubic_kernel(d, a=CATMULL_ROM_A):
    """Keys cubic convolution kernel; ``a = -0.5`` gives Catmull-Rom."""
    d = np.abs(np.asarray(d, dtype=np.float64))
    d2, d3 = d * d, d * d * d
    near = (a + 2.0) * d3 - (a + 3.0) * d2 + 1.0
    far = a * d3 - 5.0 * a * d2 + 8.0 * a * d - 4.0 * a
    return np.where(d <= 1.0, near, np.where(d < 2.0, far, 0.0))


def source_coordinates(n_src, n_dst):
    """Pixel-centre aligned source position of every destination sample."""
    scale = n_src / n_dst
    return (np.arange(n_dst) + 0.5) * scale - 0.5


def resample_taps(n_src, n_dst, a=CATMULL_ROM_A):
    """Four-tap indices (clamped to the source) and weights along one axis."""
    x = source_coordinates(n_src, n_dst)
    x0 = np.floor(x)
    offsets = np.arange(-1, 3)
    idx = x0[:, None].astype(np.int64) + offsets[None, :]
    wts = cubic_kernel(x[:, None] - idx, a)
    return np.clip(idx, 0, n_src - 1), wts


def resize_stack(frames, dst_width, dst_height, clamp=True):
    """Bicubic resize of an ``(N, H, W)`` stack; returns float64 ``(N, dst_height, dst_width)``.

    Separable: columns first, then rows. With ``clamp=False`` the result is
    the raw (linear) interpolant, which may overshoot [0, 255].
    """
    arr = np.asarray(frames, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise SizeError(f"expected (N, H, W) frames, got shape {arr.shape}")
    _, h, w = arr.shape
    if h < 4 or w < 4:
        raise SizeError(f"source {w}x{h} is smaller than the 4x4 kernel support")
    if dst_width < 1 or dst_height < 1:
        raise SizeError("destination dimensions must be >= 1")
    cidx, cw = resample_taps(w, dst_width)
    out = _kernels.taps_apply(arr, cidx, cw)  # (N, h, dst_width)
    ridx, rw = resample_taps(h, dst_height)
    out = _kernels.taps_apply(np.swapaxes(out, 1, 2), ridx, rw)
    out = np.ascontiguousarray(np.swapaxes(out, 1, 2))
    if clamp:
        np.clip(out, 0.0, 255.0, out=out)
    return out


def bicubic_resize(src, dst_width=64, dst_height=64):
    """Resize one raw frame (array or :class:`Frame`) to a raw255 frame."""
    if isinstance(src, Frame):
        src = src.pixels
    src = np.asarray(src)
    if src.ndim != 2:
        raise SizeError(f"expected a 2-D frame, got shape {src.shape}")
    return Frame(resize_stack(src, dst_width, dst_height)[0], RAW255)


def normalize(f):
    if f.scale != RAW255:
        raise ContractError(f"normalize expects a raw255 frame, got {f.scale}")
    return Frame(f.pixels / 255.0, UNIT)


def denormalize(f):
    if f.scale != UNIT:
        raise ContractError(f"denormalize expects a unit frame, got {f.scale}")
    return Frame(np.clip(f.pixels * 255.0, 0.0, 255.0), RAW255)


def vectorize(f):
    """Row-major flattening: pixel (r, c) lands at index ``r * width + c``."""
    if f.pixels.size != FRAME_SIZE:
        raise SizeError(f"expected {FRAME_SIZE} pixels, got {f.pixels.size}")
    return f.pixels.reshape(-1).copy()


def devectorize(v, scale=RAW255):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size != FRAME_SIZE:
        raise SizeError(f"expected a {FRAME_SIZE}-vector, got shape {v.shape}")
    return Frame(v.reshape(FRAME_SHAPE), scale)


def write_pgm(path, frame):
    """Write a binary (P5) 8-bit PGM, rounding to the nearest integer."""
    px = frame.pixels * 255.0 if frame.scale == UNIT else frame.pixels
    data = np.clip(np.rint(px), 0, 255).astype(np.uint8)
    h, w = data.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + data.tobytes())


def read_pgm(path):
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    if tokens[0] != b"P5" or int(tokens[3]) != 255:
        raise ValidationError(f"{path}: not an 8-bit P5 PGM")
    w, h = int(tokens[1]), int(tokens[2])
    data = np.frombuffer(raw[pos + 1:pos + 1 + w * h], dtype=np.uint8)
    return Frame(data.reshape(h, w).astype(np.float64), RAW255)
