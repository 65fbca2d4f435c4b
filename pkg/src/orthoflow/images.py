"""Image loading and saving for the CLI (PNG, binary PPM/PGM).

RGB inputs are converted to grayscale with the standard luma weights
0.299/0.587/0.114; 8-bit intensities are normalized to [0, 1].
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .grids import GrayImage

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def rgb_to_luma(rgb: np.ndarray) -> np.ndarray:
    """Luma of an (H, W, 3+) uint8 or float RGB array, same scale."""
    r, g, b = LUMA_WEIGHTS
    return (
        r * rgb[..., 0].astype(np.float64)
        + g * rgb[..., 1].astype(np.float64)
        + b * rgb[..., 2].astype(np.float64)
    )


def load_gray_image(path) -> GrayImage:
    """Load an 8-bit PNG/PPM/PGM as a [0, 1] grayscale image."""
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode in ("RGB", "RGBA", "P"):
                arr = np.asarray(img.convert("RGB"))
                gray = rgb_to_luma(arr) / 255.0
            elif img.mode in ("L", "I;16", "I"):
                arr = np.asarray(img.convert("L"), dtype=np.float64)
                gray = arr / 255.0
            else:
                raise ValueError(f"unsupported image mode {img.mode!r} in {path}")
    except FileNotFoundError:
        raise FileNotFoundError(f"cannot read image: {path}") from None
    return GrayImage(np.clip(gray, 0.0, 1.0))


def crop_to_multiple(image: GrayImage, multiple: int = 32) -> GrayImage:
    """Crop trailing rows/columns so both dimensions divide ``multiple``."""
    h = image.height - image.height % multiple
    w = image.width - image.width % multiple
    if h < multiple or w < multiple:
        raise ValueError(
            f"image {image.width}x{image.height} too small for a "
            f"{multiple}-multiple crop"
        )
    if (h, w) == (image.height, image.width):
        return image
    return GrayImage(image.data[:h, :w])


def save_rgb_png(rgb: np.ndarray, path) -> None:
    """Write an (H, W, 3) uint8 array as a PNG."""
    if rgb.dtype != np.uint8 or rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) uint8 array")
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")
