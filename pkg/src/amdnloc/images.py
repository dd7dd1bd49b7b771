"""Fingerprint images: complex CFR matrices rendered as two-channel
pictures (magnitude, phase) and amplitude matrices as single-channel
pictures, normalized per image into [0, 1].

Template matching operates on the magnitude channel only; phase wraps
would create spurious correlation discontinuities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FingerprintImage:
    """Pixel grid in [0, 1]: rows are antennas, columns subcarriers."""

    pixels: np.ndarray  # (channels, height, width)

    @property
    def channels(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    @property
    def magnitude(self) -> np.ndarray:
        return self.pixels[0]


def cfr_to_image(h: np.ndarray) -> FingerprintImage:
    """Two-channel image of a complex CFR matrix.

    Channel 0 is |H| scaled by the per-image maximum; channel 1 is the
    wrapped phase mapped to [0, 1].  An all-zero matrix yields a zero
    magnitude channel and a flat 0.5 phase channel.
    """
    h = np.asarray(h)
    mag = np.abs(h).astype(np.float64)
    peak = mag.max(initial=0.0)
    ch0 = mag / peak if peak > 0.0 else np.zeros_like(mag)
    ch1 = (np.angle(h).astype(np.float64) + np.pi) / (2.0 * np.pi)
    return FingerprintImage(pixels=np.stack([ch0, ch1]))


def adcam_to_image(a: np.ndarray) -> FingerprintImage:
    """Single-channel image of an amplitude matrix, max-normalized."""
    a = np.asarray(a, dtype=np.float64)
    peak = a.max(initial=0.0)
    ch0 = a / peak if peak > 0.0 else np.zeros_like(a)
    return FingerprintImage(pixels=ch0[np.newaxis])


def dump_pgm(image: FingerprintImage, path, channel: int = 0) -> None:
    """Write one channel as an 8-bit binary PGM for visual inspection."""
    pix = np.clip(image.pixels[channel], 0.0, 1.0)
    data = np.rint(pix * 255.0).astype(np.uint8)
    header = f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())
