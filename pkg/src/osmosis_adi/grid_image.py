"""Pixel-grid images, Netpbm I/O and error metrics.

Pixel ``(i, j)`` with ``i`` the column (x) and ``j`` the row (y) is stored at
``data[c, j, i]``; flattening a channel in C order therefore gives the linear
index ``j * n_x + i`` (x fastest), which is the ordering every operator in this
package is written against.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

DEFAULT_OFFSET = 1.0 / 255.0

_MAGICS = {b"P2": (1, False), b"P3": (3, False), b"P5": (1, True), b"P6": (3, True)}


class ImageFormatError(ValueError):
    """Base class for Netpbm decoding failures."""


class UnsupportedFormatError(ImageFormatError):
    pass


class MalformedHeaderError(ImageFormatError):
    pass


class TruncatedPayloadError(ImageFormatError):
    pass


@dataclass(frozen=True)
class Image:
    """Immutable multi-channel image with values on the real line.

    Parameters
    ----------
    data : ndarray, shape (channels, n_y, n_x)
    offset : float
        Positivity shift already added to ``data`` (see :func:`ensure_positive`).
    """

    data: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[np.newaxis]
        if arr.ndim != 3 or arr.shape[0] not in (1, 3):
            raise ValueError(f"expected (1|3, n_y, n_x) data, got shape {arr.shape}")
        if arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ValueError("image dimensions must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_y(self) -> int:
        return self.data.shape[1]

    @property
    def n_x(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        """Grid shape as ``(n_y, n_x)``."""
        return self.data.shape[1], self.data.shape[2]

    @property
    def size(self) -> int:
        return self.n_x * self.n_y

    def vector(self, channel: int = 0) -> np.ndarray:
        """Channel values as a length ``n_x * n_y`` vector (x fastest)."""
        _check_channel(self, channel)
        return self.data[channel].ravel()

    @classmethod
    def from_vectors(cls, vectors, n_x: int, n_y: int, offset: float = 0.0) -> "Image":
        vecs = [np.asarray(v, dtype=np.float64).reshape(n_y, n_x) for v in vectors]
        return cls(np.stack(vecs), offset=offset)

    def without_offset(self) -> "Image":
        """Undo :func:`ensure_positive`."""
        return Image(self.data - self.offset)


def _check_channel(img: Image, channel: int) -> None:
    if not 0 <= channel < img.channels:
        raise IndexError(f"channel {channel} out of range for {img.channels}-channel image")


def _tokens(buf: bytes, pos: int, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace separated header tokens, skipping comments."""
    out = []
    n = len(buf)
    while len(out) < count:
        while pos < n and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos : pos + 1] == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= n:
            raise MalformedHeaderError("unexpected end of file inside header")
        start = pos
        while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
            pos += 1
        out.append(buf[start:pos])
    return out, pos


def decode_netpbm(buf: bytes) -> Image:
    magic = buf[:2]
    if magic not in _MAGICS:
        raise UnsupportedFormatError(f"unsupported magic number {magic!r}")
    channels, binary = _MAGICS[magic]
    toks, pos = _tokens(buf, 2, 3)
    try:
        width, height, maxval = (int(t) for t in toks)
    except ValueError:
        raise MalformedHeaderError(f"non-integer header fields {toks!r}") from None
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"bad dimensions {width}x{height}")
    if not 0 < maxval <= 65535:
        raise MalformedHeaderError(f"maxval {maxval} outside 1..65535")

    count = width * height * channels
    if binary:
        if pos >= len(buf) or not buf[pos : pos + 1].isspace():
            raise MalformedHeaderError("missing whitespace after maxval")
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        payload = buf[pos : pos + count * dtype.itemsize]
        if len(payload) < count * dtype.itemsize:
            raise TruncatedPayloadError(
                f"expected {count * dtype.itemsize} payload bytes, found {len(payload)}"
            )
        values = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    else:
        text = buf[pos:]
        # strip comments from the raster as well; some writers emit them
        lines = [ln.split(b"#", 1)[0] for ln in text.splitlines()]
        fields = b" ".join(lines).split()
        if len(fields) < count:
            raise TruncatedPayloadError(f"expected {count} samples, found {len(fields)}")
        try:
            values = np.array([int(f) for f in fields[:count]], dtype=np.float64)
        except ValueError:
            raise ImageFormatError("non-integer sample in ASCII raster") from None
    if values.max(initial=0) > maxval:
        raise ImageFormatError("sample exceeds maxval")
    data = values.reshape(height, width, channels).transpose(2, 0, 1) / maxval
    return Image(data)


def load_image(path) -> Image:
    """Read a PGM (P2/P5) or PPM (P3/P6) file, scaling samples to [0, 1]."""
    with open(path, "rb") as fh:
        return decode_netpbm(fh.read())


def encode_netpbm(img: Image) -> bytes:
    q = np.rint(np.clip(img.data, 0.0, 1.0) * 255.0).astype(np.uint8)
    magic = b"P5" if img.channels == 1 else b"P6"
    header = magic + b"\n%d %d\n255\n" % (img.n_x, img.n_y)
    return header + q.transpose(1, 2, 0).tobytes()


def save_image(img: Image, path) -> None:
    """Write ``img`` as binary PGM/PPM with maxval 255; values are clamped to [0, 1]."""
    with open(os.fspath(path), "wb") as fh:
        fh.write(encode_netpbm(img))


def ensure_positive(img: Image, eps: float = DEFAULT_OFFSET) -> Image:
    """Shift every value by ``eps`` so the image is strictly positive."""
    if not eps > 0:
        raise ValueError(f"positivity offset must be > 0, got {eps}")
    return Image(img.data + eps, offset=img.offset + eps)


def mean_value(img: Image, channel: int = 0) -> float:
    _check_channel(img, channel)
    return float(np.mean(img.data[channel]))


def rms(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.mean(x * x)))


def rrmse(u, ref) -> float:
    """Relative RMS error ``rms(u - ref) / rms(ref)``.

    Accepts :class:`Image` instances or plain arrays; for multi-channel images
    the RMS runs over all channels jointly.
    """
    a = u.data if isinstance(u, Image) else np.asarray(u, dtype=np.float64)
    b = ref.data if isinstance(ref, Image) else np.asarray(ref, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    scale = rms(b)
    if scale == 0.0:
        raise ValueError("reference is identically zero")
    return rms(a - b) / scale
