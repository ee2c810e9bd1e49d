"""Image and video containers, PNG I/O and clipping.

Pixels are float64 in a nominal [0, 1] range, stored as an (H, W, C) array.
Quantization to 8 bits only happens in :func:`save_png`.
"""
import os
import re
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage


class DecodeError(ValueError):
    """Raised when a PNG uses a feature this package does not read."""


class FrameSequenceError(ValueError):
    """Raised for gaps or shape mismatches in a frame directory."""


@dataclass(frozen=True, eq=False)
class Image:
    """An H x W x C raster with C in {1, 3}.

    ``data`` is copied to a read-only float64 array on construction, so an
    Image can be shared freely between threads.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"expected an (H, W, C) array, got shape {arr.shape}")
        h, w, c = arr.shape
        if h < 1 or w < 1:
            raise ValueError(f"image must be at least 1x1, got {h}x{w}")
        if c not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {c}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def adopt(cls, arr):
        """Wrap a freshly allocated (H, W, C) float64 array without copying.

        The caller gives up ownership: the array is made read-only.
        """
        if (not isinstance(arr, np.ndarray) or arr.dtype != np.float64 or arr.ndim != 3
                or arr.shape[2] not in (1, 3) or arr.shape[0] < 1 or arr.shape[1] < 1):
            return cls(arr)
        arr.setflags(write=False)
        obj = object.__new__(cls)
        object.__setattr__(obj, "data", arr)
        return obj

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Image({self.height}x{self.width}x{self.channels})"


@dataclass(frozen=True, eq=False)
class VideoSequence:
    frames: tuple
    frame_rate: float = 25.0

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("a video needs at least one frame")
        shape = frames[0].shape
        for i, fr in enumerate(frames):
            if fr.shape != shape:
                raise FrameSequenceError(
                    f"frame {i} has shape {fr.shape}, expected {shape}")
        if not self.frame_rate > 0:
            raise ValueError("frame_rate must be positive")
        object.__setattr__(self, "frames", frames)

    def __len__(self):
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    @property
    def shape(self):
        return self.frames[0].shape


def as_image(x):
    """Return ``x`` as an :class:`Image` (arrays are wrapped, Images pass through)."""
    return x if isinstance(x, Image) else Image(x)


def clamp_unit(img):
    """Clip every value to [0, 1]."""
    return Image.adopt(np.clip(as_image(img).data, 0.0, 1.0))


def quantize(values):
    """Clamp to [0, 1] and map to uint8 with round-half-up."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


_UNSUPPORTED_MODES = {
    "1": "1-bit depth",
    "P": "palette",
    "PA": "palette with alpha",
    "LA": "alpha channel",
    "RGBA": "alpha channel",
    "I": "16/32-bit depth",
    "I;16": "16-bit depth",
    "I;16B": "16-bit depth",
    "I;16L": "16-bit depth",
    "F": "floating-point samples",
}


def load_png(path):
    """Read an 8-bit grayscale or RGB PNG as an Image with values p/255."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with PILImage.open(path) as im:
        if im.format != "PNG":
            raise DecodeError(f"{path}: not a PNG file ({im.format})")
        mode = im.mode
        if mode not in ("L", "RGB"):
            feature = _UNSUPPORTED_MODES.get(mode, f"mode {mode}")
            raise DecodeError(f"{path}: unsupported PNG feature: {feature}")
        arr = np.asarray(im, dtype=np.uint8)
    return Image(arr.astype(np.float64) / 255.0)


def save_png(img, path):
    """Write ``img`` as an 8-bit PNG (clamped, round-half-up quantized)."""
    img = as_image(img)
    q = quantize(img.data)
    if img.channels == 1:
        pil = PILImage.fromarray(q[:, :, 0], mode="L")
    else:
        pil = PILImage.fromarray(q, mode="RGB")
    pil.save(os.fspath(path), format="PNG", optimize=False)


def _pattern_regex(pattern):
    m = re.fullmatch(r"(.*)%0?(\d*)d(.*)", pattern)
    if m is None:
        raise ValueError(f"frame pattern needs a %d field: {pattern!r}")
    prefix, width, suffix = m.groups()
    digits = rf"\d{{{width}}}" if width else r"\d+"
    return re.compile(re.escape(prefix) + f"({digits})" + re.escape(suffix) + "$")


def load_frames(directory, pattern="%03d.png", frame_rate=25.0):
    """Load a zero-padded PNG frame sequence (``000.png``, ``001.png``, ...)."""
    directory = os.fspath(directory)
    regex = _pattern_regex(pattern)
    found = {}
    for name in os.listdir(directory):
        m = regex.match(name)
        if m:
            found[int(m.group(1))] = name
    if not found:
        raise FrameSequenceError(f"no frames matching {pattern!r} in {directory}")
    frames = []
    for i in range(max(found) + 1):
        if i not in found:
            raise FrameSequenceError(f"missing frame {pattern % i} ({directory})")
        fr = load_png(os.path.join(directory, found[i]))
        if frames and fr.shape != frames[0].shape:
            raise FrameSequenceError(
                f"dimension mismatch at frame {found[i]}: {fr.shape} vs {frames[0].shape}")
        frames.append(fr)
    return VideoSequence(tuple(frames), frame_rate)


def save_frames(video, directory, pattern="%03d.png"):
    directory = os.fspath(directory)
    os.makedirs(directory, exist_ok=True)
    for i, fr in enumerate(video):
        save_png(fr, os.path.join(directory, pattern % i))
