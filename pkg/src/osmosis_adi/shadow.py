"""Shadow removal by osmosis with the drift switched off along the shadow boundary."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid_image import Image, load_image
from .operators import DriftField, canonical_drift, mask_drift
from .steppers import EvolutionReport, SchemeConfig, evolve


class MaskShapeError(ValueError):
    pass


@dataclass(frozen=True)
class ShadowMask:
    """Boundary pixels (after dilation) and the derived edge masks.

    An edge is masked when either of its two pixels is marked.
    """

    pixels: np.ndarray
    dilation: int = 0

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=bool)
        if px.ndim != 2:
            raise ValueError("mask must be a 2-D grid")
        if self.dilation < 0:
            raise ValueError("dilation radius must be non-negative")
        if self.dilation > 0 and px.any():
            px = ndimage.binary_dilation(px, np.ones((3, 3), bool), iterations=self.dilation)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def edge_masks(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-edge masks shaped like ``DriftField.d1`` and ``DriftField.d2``."""
        px = self.pixels
        n_y, n_x = px.shape
        m1 = np.zeros((n_y, n_x + 1), bool)
        m2 = np.zeros((n_y + 1, n_x), bool)
        m1[:, :-1] |= px
        m1[:, 1:] |= px
        m2[:-1, :] |= px
        m2[1:, :] |= px
        return m1, m2


def load_mask(path, shape=None, dilation: int = 1) -> ShadowMask:
    """Read a PGM mask; samples above 127/255 mark the boundary.

    ``shape`` is the ``(n_y, n_x)`` of the target image, checked if given.
    """
    img = load_image(path)
    if shape is not None and tuple(img.shape) != tuple(shape):
        raise MaskShapeError(f"mask is {img.n_x}x{img.n_y}, image is {shape[1]}x{shape[0]}")
    return ShadowMask(img.data[0] > 127.0 / 255.0, dilation)


def masked_drifts(f: Image, mask: ShadowMask, h: float = 1.0) -> list[DriftField]:
    if mask.shape != f.shape:
        raise MaskShapeError(f"mask grid {mask.shape} does not match image {f.shape}")
    m1, m2 = mask.edge_masks()
    return [mask_drift(canonical_drift(f, h, c), m1, m2) for c in range(f.channels)]


def shadow_evolution(f: Image, mask: ShadowMask, cfg: SchemeConfig, h: float = 1.0,
                     threads: int = 1) -> EvolutionReport:
    """Full evolution report of the shadow-removal run (see :func:`remove_shadow`)."""
    return evolve(f, masked_drifts(f, mask, h), cfg, threads=threads)


def remove_shadow(f: Image, mask: ShadowMask, cfg: SchemeConfig, h: float = 1.0) -> Image:
    """Osmosis filtering of ``f`` with its own drift zeroed on the masked edges.

    ``f`` must be strictly positive; the result keeps each channel's mean.
    No inpainting of the boundary band is done.
    """
    return shadow_evolution(f, mask, cfg, h).final
