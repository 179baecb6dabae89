"""Progressive film: per-pixel running means of whole iterations."""

from __future__ import annotations

import numpy as np

from .errors import ImageShapeError, ParameterError

# Rec. 709 luma weights
LUMINANCE = np.array([0.2126, 0.7152, 0.0722])


def luminance(rgb: np.ndarray) -> np.ndarray:
    return rgb @ LUMINANCE


class Film:
    def __init__(self, width: int, height: int) -> None:
        if width < 1 or height < 1:
            raise ParameterError(f"film must be at least 1x1, got {width}x{height}")
        self.width = width
        self.height = height
        self.iterations = 0
        self.mean = np.zeros((height, width, 3))
        self.luminance_m2 = np.zeros((height, width))

    def add_iteration(self, frame: np.ndarray) -> None:
        """Fold one iteration's estimate into the running mean."""

        if frame.shape != self.mean.shape:
            raise ImageShapeError(f"frame shape {frame.shape} does not match {self.mean.shape}")
        if not np.all(np.isfinite(frame)):
            raise ParameterError("frame contains non-finite values")
        self.iterations += 1
        n = self.iterations
        self.mean += (frame - self.mean) / n
        self.luminance_m2 += (luminance(frame) ** 2 - self.luminance_m2) / n

    def luminance_variance(self) -> np.ndarray:
        """Per-pixel variance of one iteration's luminance."""

        return np.maximum(self.luminance_m2 - luminance(self.mean) ** 2, 0.0)

    def image(self) -> np.ndarray:
        return self.mean.astype(np.float32)
