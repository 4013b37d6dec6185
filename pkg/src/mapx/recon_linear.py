"""Linear standalone reconstruction: beamform, divide, clip, map to ground.

The unfolded virtual array is transformed into the angle-of-arrival domain
with the unnormalized kernel ``exp(-j pi (k u + l v))`` evaluated on the bin
grid ``u_r = 2 r / K`` for ``r in [-K/2, K/2)``; this is exactly a 2-D FFT
followed by an fftshift, and it is checked against brute-force steering sums
in the tests. Per bin, the real part of the information/reference quotient
cancels the aggregate channel and exposes the encoded amplitude, which is
hard-clipped to the encode range. Bins whose reference magnitude falls below
``clip_epsilon`` times the maximum are marked invalid. Ground estimates read
each evaluation cell's nearest bin (no interpolation) and decode it back to
measurement units; several subframe pairs are combined by a cellwise mean of
the decoded maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import decode_amplitude
from .phy import ReceivedPair
from .scenario import HapsGeometry, ScenarioConfig, ground_to_direction_cosines


@dataclass(frozen=True)
class AoAMap:
    """Complex beamformed map over the direction-cosine bin grid."""

    values: np.ndarray  # (virtual_kx, virtual_ky) complex
    u_axis: np.ndarray  # (virtual_kx,) bin direction cosines, ascending
    v_axis: np.ndarray  # (virtual_ky,)

    def __post_init__(self) -> None:
        for arr in (self.values, self.u_axis, self.v_axis):
            arr.setflags(write=False)


@dataclass(frozen=True)
class GroundEstimate:
    """Reconstructed measurement map on the evaluation grid with validity mask."""

    values: np.ndarray  # (eval_grid_side, eval_grid_side) float
    valid: np.ndarray   # same shape, bool

    def __post_init__(self) -> None:
        self.values.setflags(write=False)
        self.valid.setflags(write=False)

    @property
    def grid_side(self) -> int:
        return self.values.shape[0]

    @property
    def valid_fraction(self) -> float:
        return float(self.valid.mean())


def bin_axis(n_bins: int) -> np.ndarray:
    """Direction cosines of the AoA bins: (2a - K)/K for a = 0..K-1."""
    return (2.0 * np.arange(n_bins) - n_bins) / n_bins


def nearest_bin(u: np.ndarray | float, n_bins: int) -> np.ndarray:
    """Index of the bin nearest to direction cosine u, ties toward smaller index."""
    a = np.ceil(n_bins * (np.asarray(u, dtype=float) + 1.0) / 2.0 - 0.5)
    return np.clip(a, 0, n_bins - 1).astype(int)


def aoa_transform(v: np.ndarray, geom: HapsGeometry) -> AoAMap:
    """Beamform the virtual array onto the AoA bin grid.

    b[r, t] = sum_{k,l} v[k, l] exp(-j pi (k u_r + l v_t)), computed by FFT.
    Satisfies Parseval under this unnormalized convention:
    sum |b|^2 = Kx * Ky * sum |v|^2.
    """
    expected = (geom.virtual_kx, geom.virtual_ky)
    if v.shape != expected:
        raise ValueError(f"matrix shape {v.shape} != geometry {expected}")
    values = np.fft.fftshift(np.fft.fft2(v))
    return AoAMap(
        values=values,
        u_axis=bin_axis(geom.virtual_kx),
        v_axis=bin_axis(geom.virtual_ky),
    )


def divide_and_clip(
    b_ref: AoAMap, b_info: AoAMap, config: ScenarioConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin amplitude ratio with hard clipping and a degeneracy mask.

    Returns (amplitudes, valid): the real part of b_info/b_ref clipped to
    [encode_min, encode_max], and a mask flagging bins whose reference
    magnitude is at least ``clip_epsilon`` times the maximum. Invalid bins
    carry the neutral reference amplitude 1.0.
    """
    if b_ref.values.shape != b_info.values.shape:
        raise ValueError("reference and information maps differ in shape")
    mag = np.abs(b_ref.values)
    peak = mag.max()
    valid = (mag > 0) & (mag >= config.clip_epsilon * peak)
    ratio = np.ones_like(mag)
    np.divide(
        (b_info.values * np.conj(b_ref.values)).real,
        mag * mag,
        out=ratio,
        where=valid,
    )
    amplitudes = np.clip(ratio, config.encode_min, config.encode_max)
    return amplitudes, valid


def eval_grid_centers(config: ScenarioConfig) -> np.ndarray:
    """1-D cell-center coordinates of the evaluation grid (both axes)."""
    g = config.eval_grid_side
    cell = config.area_side_m / g
    return (np.arange(g) + 0.5) * cell - config.area_side_m / 2.0


def eval_grid_direction_cosines(
    config: ScenarioConfig, geom: HapsGeometry
) -> tuple[np.ndarray, np.ndarray]:
    """(u, v) of every evaluation cell center, each (G, G)."""
    centers = eval_grid_centers(config)
    gx, gy = np.meshgrid(centers, centers, indexing="ij")
    return ground_to_direction_cosines(np.stack([gx, gy], axis=-1), geom)


def aoa_to_ground(
    amplitudes: np.ndarray,
    valid: np.ndarray,
    geom: HapsGeometry,
    config: ScenarioConfig,
) -> GroundEstimate:
    """Decode the per-bin amplitudes onto the ground evaluation grid.

    Every cell center maps through its direction cosines to the nearest bin
    (Euclidean in (u, v), ties toward the smaller index); bin invalidity
    propagates to the cell.
    """
    u, v = eval_grid_direction_cosines(config, geom)
    iu = nearest_bin(u, geom.virtual_kx)
    iv = nearest_bin(v, geom.virtual_ky)
    cell_amp = amplitudes[iu, iv]
    cell_valid = valid[iu, iv]
    values = np.asarray(decode_amplitude(cell_amp, config), dtype=float)
    values[~cell_valid] = 0.0
    return GroundEstimate(values=values, valid=cell_valid)


def reconstruct_linear(
    pairs: list[ReceivedPair], geom: HapsGeometry, config: ScenarioConfig
) -> GroundEstimate:
    """Full linear pipeline over one or more subframe pairs.

    Each pair is beamformed, divided, clipped, and decoded to a ground map;
    the returned estimate is the cellwise mean over pairs, skipping cells
    invalid in a pair. A cell is invalid only if it is invalid in all pairs.
    """
    if not pairs:
        raise ValueError("need at least one subframe pair")
    g = config.eval_grid_side
    total = np.zeros((g, g))
    count = np.zeros((g, g), dtype=int)
    for pair in pairs:
        b_ref = aoa_transform(pair.v_ref, geom)
        b_info = aoa_transform(pair.v_info, geom)
        amplitudes, valid = divide_and_clip(b_ref, b_info, config)
        est = aoa_to_ground(amplitudes, valid, geom, config)
        total += np.where(est.valid, est.values, 0.0)
        count += est.valid
    valid = count > 0
    values = np.divide(total, count, out=np.zeros_like(total), where=valid)
    return GroundEstimate(values=values, valid=valid)
