"""Frame encoding: low-resolution color plus gradient-orientation histograms.

A camera frame is reduced to one feature vector with two modality blocks:

* block-mean downsampled RGB values, and
* magnitude-weighted histograms of unsigned gradient orientation, computed
  per cell on the luminance image.

Each block is scaled to unit L2 norm independently before concatenation, so
neither modality dominates the other in later least-squares fits.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Frame",
    "ModalityConfig",
    "FeatureVector",
    "downsample_color",
    "gradient_histogram",
    "encode",
]


@dataclass(frozen=True)
class Frame:
    """RGB image with float pixel values in [0, 1], shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError("frame pixels must have shape (height, width, 3)")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("frame must contain at least one pixel")
        if not np.isfinite(px).all():
            raise ValueError("frame pixels must be finite")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("frame pixels must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class ModalityConfig:
    """Sizes of the two feature blocks.

    color_downsample    : (rows, cols) of the block-mean color image.
    gradient_bins       : number of orientation bins over [0, pi).
    gradient_downsample : (rows, cols) of the cell grid for the histograms.
    """

    color_downsample: tuple = (8, 8)
    gradient_bins: int = 4
    gradient_downsample: tuple = (4, 4)

    def __post_init__(self):
        cr, cc = self.color_downsample
        gr, gc = self.gradient_downsample
        if min(cr, cc, gr, gc) < 1:
            raise ValueError("feature block sizes must be positive")
        if self.gradient_bins < 2:
            raise ValueError("at least two orientation bins are required")

    @property
    def color_length(self) -> int:
        return self.color_downsample[0] * self.color_downsample[1] * 3

    @property
    def gradient_length(self) -> int:
        gr, gc = self.gradient_downsample
        return gr * gc * self.gradient_bins

    @property
    def feature_length(self) -> int:
        return self.color_length + self.gradient_length


@dataclass(frozen=True)
class FeatureVector:
    """Encoded frame: concatenated modality blocks plus their boundaries.

    modality_offsets[i] is the start index of block i; a final entry holds
    the total length, so block i spans values[offsets[i]:offsets[i + 1]].
    """

    values: np.ndarray
    modality_offsets: tuple = field(default=())

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1:
            raise ValueError("feature values must be a vector")
        object.__setattr__(self, "values", vals)

    def block(self, i: int) -> np.ndarray:
        lo, hi = self.modality_offsets[i], self.modality_offsets[i + 1]
        return self.values[lo:hi]


def _block_bounds(size: int, blocks: int) -> np.ndarray:
    # integer boundaries; exact block split when size % blocks == 0
    return np.floor(np.linspace(0, size, blocks + 1)).astype(int)


def downsample_color(frame: Frame, rows: int, cols: int) -> np.ndarray:
    """Block-mean color values as a flat vector of length rows*cols*3.

    Every output value is the mean of its source block, so it stays inside
    the input value range. Layout is row-major over (rows, cols, channel).
    """
    if rows > frame.height or cols > frame.width:
        raise ValueError("downsample size exceeds frame size")
    rb = _block_bounds(frame.height, rows)
    cb = _block_bounds(frame.width, cols)
    out = np.empty((rows, cols, 3), dtype=np.float64)
    for r in range(rows):
        for c in range(cols):
            out[r, c] = frame.pixels[rb[r]:rb[r + 1], cb[c]:cb[c + 1]].mean(axis=(0, 1))
    return out.ravel()


def gradient_histogram(frame: Frame, cfg: ModalityConfig) -> np.ndarray:
    """Per-cell orientation histograms as a flat nonnegative vector.

    Gradients are central differences of the luminance image (channel mean),
    one-sided at the borders. Orientation is unsigned, in [0, pi); each pixel
    votes its gradient magnitude into one bin. Layout is row-major over
    (cell_row, cell_col, bin).
    """
    rows, cols = cfg.gradient_downsample
    if rows > frame.height or cols > frame.width:
        raise ValueError("cell grid exceeds frame size")
    lum = frame.pixels.mean(axis=2)
    gy, gx = np.gradient(lum)
    mag = np.hypot(gx, gy)
    ori = np.mod(np.arctan2(gy, gx), np.pi)  # unsigned orientation
    bins = cfg.gradient_bins
    idx = np.minimum((ori / (np.pi / bins)).astype(int), bins - 1)
    rb = _block_bounds(frame.height, rows)
    cb = _block_bounds(frame.width, cols)
    out = np.zeros((rows, cols, bins), dtype=np.float64)
    for r in range(rows):
        for c in range(cols):
            cell_idx = idx[rb[r]:rb[r + 1], cb[c]:cb[c + 1]].ravel()
            cell_mag = mag[rb[r]:rb[r + 1], cb[c]:cb[c + 1]].ravel()
            out[r, c] = np.bincount(cell_idx, weights=cell_mag, minlength=bins)
    return out.ravel()


def _unit(block: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(block)
    if nrm == 0.0:  # all-zero block stays zero
        return block
    return block / nrm


def encode(frame: Frame, cfg: ModalityConfig) -> FeatureVector:
    """Encode one frame: unit-normalized color block, then gradient block."""
    color = _unit(downsample_color(frame, *cfg.color_downsample))
    grad = _unit(gradient_histogram(frame, cfg))
    values = np.concatenate([color, grad])
    offsets = (0, color.size, color.size + grad.size)
    return FeatureVector(values=values, modality_offsets=offsets)
