"""MIMO-OFDM channel math: steering vectors, CFR synthesis and the
angle-delay amplitude transform.

All operations are pure functions on numpy arrays.  Complex math is done
in complex128 regardless of how the inputs are stored, so the unitarity
and energy-preservation guarantees hold to near machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s


class ChannelDomainError(ValueError):
    """Raised when an input violates a channel-model precondition."""


@dataclass(frozen=True)
class DatasetMeta:
    """System parameters shared by every sample of a dataset.

    ``antenna_spacing`` defaults to half the carrier wavelength and
    ``sample_interval`` is always ``1 / bandwidth``.
    """

    num_bs_antennas: int = 64
    num_subcarriers: int = 64
    carrier_frequency: float = 60e9
    bandwidth: float = 0.05e9
    antenna_spacing: float | None = None
    scene_extent: tuple[float, float] = (250.0, 250.0)

    def __post_init__(self):
        if self.num_bs_antennas < 1:
            raise ChannelDomainError("num_bs_antennas must be >= 1")
        if self.num_subcarriers < 1:
            raise ChannelDomainError("num_subcarriers must be >= 1")
        if self.carrier_frequency <= 0:
            raise ChannelDomainError("carrier_frequency must be positive")
        if self.bandwidth <= 0:
            raise ChannelDomainError("bandwidth must be positive")
        if self.antenna_spacing is None:
            object.__setattr__(self, "antenna_spacing", self.wavelength / 2.0)
        if self.antenna_spacing <= 0:
            raise ChannelDomainError("antenna_spacing must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def sample_interval(self) -> float:
        return 1.0 / self.bandwidth

    def to_dict(self) -> dict:
        return {
            "num_bs_antennas": self.num_bs_antennas,
            "num_subcarriers": self.num_subcarriers,
            "carrier_frequency": self.carrier_frequency,
            "bandwidth": self.bandwidth,
            "antenna_spacing": self.antenna_spacing,
            "scene_extent": list(self.scene_extent),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetMeta":
        return cls(
            num_bs_antennas=int(d["num_bs_antennas"]),
            num_subcarriers=int(d["num_subcarriers"]),
            carrier_frequency=float(d["carrier_frequency"]),
            bandwidth=float(d["bandwidth"]),
            antenna_spacing=float(d["antenna_spacing"]),
            scene_extent=tuple(float(v) for v in d["scene_extent"]),
        )


@dataclass(frozen=True)
class PropagationPath:
    """One resolved propagation path between a mobile terminal and the BS."""

    aoa: float                 # radians, open interval (0, pi)
    aod: float                 # radians
    complex_gain: complex
    sampled_delay: int         # units of meta.sample_interval
    pathloss: float            # dB
    distance: float            # meters, total unfolded length

    def __post_init__(self):
        if not (0.0 < self.aoa < np.pi):
            raise ChannelDomainError(f"aoa {self.aoa} outside (0, pi)")
        if self.sampled_delay < 0:
            raise ChannelDomainError("sampled_delay must be non-negative")


def make_path(
    aoa: float,
    aod: float,
    complex_gain: complex,
    sampled_delay: int,
    pathloss: float,
    distance: float,
    meta: DatasetMeta,
) -> PropagationPath:
    """Construct a path, rejecting delays beyond the OFDM window."""
    if sampled_delay >= meta.num_subcarriers:
        raise ChannelDomainError(
            f"sampled_delay {sampled_delay} beyond OFDM window "
            f"of {meta.num_subcarriers} samples"
        )
    return PropagationPath(
        aoa=aoa,
        aod=aod,
        complex_gain=complex(complex_gain),
        sampled_delay=int(sampled_delay),
        pathloss=float(pathloss),
        distance=float(distance),
    )


def steering_vector(phi: float, meta: DatasetMeta) -> np.ndarray:
    """Uniform-linear-array response for an arrival angle ``phi``.

    Element k is exp(-j*2*pi*k*d*cos(phi)/wavelength); element 0 is 1.
    """
    if not (0.0 < phi < np.pi):
        raise ChannelDomainError(f"phi {phi} outside (0, pi)")
    k = np.arange(meta.num_bs_antennas, dtype=np.float64)
    phase = -2.0 * np.pi * k * meta.antenna_spacing * np.cos(phi) / meta.wavelength
    return np.exp(1j * phase)


def synthesize_cfr(paths: list[PropagationPath], meta: DatasetMeta) -> np.ndarray:
    """Per-subcarrier frequency response stacked into an N_t x N_c matrix.

    Column l is the sum over paths of gain * steering(aoa) *
    exp(-j*2*pi*l*delay/N_c).
    """
    if not paths:
        raise ChannelDomainError("path list is empty")
    nt, nc = meta.num_bs_antennas, meta.num_subcarriers
    h = np.zeros((nt, nc), dtype=np.complex128)
    l = np.arange(nc, dtype=np.float64)
    for p in paths:
        if p.sampled_delay >= nc:
            raise ChannelDomainError(
                f"sampled_delay {p.sampled_delay} >= num_subcarriers {nc}"
            )
        tone = np.exp(-2j * np.pi * l * p.sampled_delay / nc)
        h += p.complex_gain * np.outer(steering_vector(p.aoa, meta), tone)
    return h


def dft_matrices(meta: DatasetMeta) -> tuple[np.ndarray, np.ndarray]:
    """Unitary DFT pair (V, F) used by the angle-delay transform.

    V carries a half-aperture shift on the column index so the angle
    axis is centered; F is the plain unitary DFT.
    """
    nt, nc = meta.num_bs_antennas, meta.num_subcarriers
    z_t = np.arange(nt).reshape(-1, 1)
    q_t = np.arange(nt).reshape(1, -1)
    v = np.exp(-2j * np.pi * z_t * (q_t - nt / 2.0) / nt) / np.sqrt(nt)
    z_c = np.arange(nc).reshape(-1, 1)
    q_c = np.arange(nc).reshape(1, -1)
    f = np.exp(-2j * np.pi * z_c * q_c / nc) / np.sqrt(nc)
    return v, f


def compute_adcam(h: np.ndarray, meta: DatasetMeta) -> np.ndarray:
    """Angle-delay amplitude matrix |V^H H F| of a single CFR realization.

    Entry (z, q) is the absolute gain seen in angle bin z and delay
    bin q.  The transform is unitary, so the Frobenius norm of the
    result equals that of the input.
    """
    h = np.asarray(h)
    nt, nc = meta.num_bs_antennas, meta.num_subcarriers
    if h.shape != (nt, nc):
        raise ChannelDomainError(
            f"CFR shape {h.shape} does not match meta ({nt}, {nc})"
        )
    v, f = dft_matrices(meta)
    return np.abs(v.conj().T @ h.astype(np.complex128) @ f)
