"""Gramian angular fields and recurrence plots of a scaled window.

All three encoders return ``w x w`` float arrays in row-major order. Gramian
fields keep their natural [-1, 1] range and recurrence plots hold 0/1.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError
from .series import WindowBlock, check_unit_interval

DEFAULT_EPSILON = 0.5
KINDS = ("gasf", "gadf", "rec")


@dataclass(frozen=True)
class ImageTriple:
    gasf: np.ndarray
    gadf: np.ndarray
    rec: np.ndarray

    def __iter__(self):
        return iter((self.gasf, self.gadf, self.rec))

    def as_dict(self) -> dict[str, np.ndarray]:
        return dict(zip(KINDS, self))

    @property
    def w(self) -> int:
        return self.gasf.shape[0]


def _unit_and_sine(scaled):
    x = check_unit_interval(scaled)
    # sqrt(1 - x^2) is sin(arccos x) on [0, 1]
    return x, np.sqrt(1.0 - x * x)


def gasf(scaled) -> np.ndarray:
    """Summation field ``cos(psi_i + psi_j) = x_i x_j - s_i s_j`` with ``s = sqrt(1 - x^2)``."""
    x, s = _unit_and_sine(scaled)
    return np.outer(x, x) - np.outer(s, s)


def gadf(scaled) -> np.ndarray:
    """Difference field ``sin(psi_i - psi_j) = s_i x_j - x_i s_j``."""
    x, s = _unit_and_sine(scaled)
    return np.outer(s, x) - np.outer(x, s)


def rec_plot(block, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Thresholded recurrence matrix: 0 where ``|b_i - b_j| < epsilon``, else 1.

    A distance of exactly ``epsilon`` counts as 1.
    """
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    b = np.asarray(block, dtype=np.float64)
    dist = np.abs(b[:, None] - b[None, :])
    return (dist >= epsilon).astype(np.float64)


def encode(block: WindowBlock, epsilon: float = DEFAULT_EPSILON,
           rec_on_raw: bool = False) -> ImageTriple:
    rec_input = block.raw if rec_on_raw else block.scaled
    return ImageTriple(gasf(block.scaled), gadf(block.scaled), rec_plot(rec_input, epsilon))


# -- export -----------------------------------------------------------------

def write_matrix_text(matrix: np.ndarray, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        for row in np.asarray(matrix):
            fh.write(" ".join(repr(float(v)) for v in row))
            fh.write("\n")
    return path


def read_matrix_text(path: str | Path) -> np.ndarray:
    with open(path) as fh:
        return np.array([[float(t) for t in line.split()] for line in fh if line.strip()])


def to_gray(matrix: np.ndarray, kind: str) -> np.ndarray:
    """Map an encoder output onto 0..255 for viewing; the model never sees this."""
    m = np.asarray(matrix, dtype=np.float64)
    unit = m if kind == "rec" else (m + 1.0) / 2.0
    return np.rint(np.clip(unit, 0.0, 1.0) * 255).astype(np.uint8)


def write_pgm(matrix: np.ndarray, path: str | Path, kind: str) -> Path:
    """Binary (P5) grayscale image, one pixel per matrix entry."""
    path = Path(path)
    pixels = to_gray(matrix, kind)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
    return path


def export_triple(triple: ImageTriple, directory: str | Path, region: str, origin: int,
                  formats: tuple[str, ...] = ("txt",)) -> list[Path]:
    """Write ``<region>_<origin>_{gasf|gadf|rec}.<ext>`` files for each requested format."""
    directory = Path(directory)
    written = []
    for kind, matrix in triple.as_dict().items():
        stem = directory / f"{region}_{origin}_{kind}"
        if "txt" in formats:
            written.append(write_matrix_text(matrix, stem.with_suffix(".txt")))
        if "pgm" in formats:
            written.append(write_pgm(matrix, stem.with_suffix(".pgm"), kind))
    return written
