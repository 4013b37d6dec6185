"""Physical layer: waveform phase rule, channel, superposed reception, unfolding.

Every device transmits on all ``symbols_m x subcarriers_n`` resource elements
of a subframe. On resource (m, n) a device at direction cosines (u, v) applies
the symbol phase

    phi(m, n) = pi * (m * array_p * u + n * array_q * v)

so that, combined with the half-wavelength array steering phase
``pi * (p*u + q*v)`` at antenna (p, q), resource (m, n) behaves like a copy of
the physical array translated by (m * array_p, n * array_q) element pitches.
Re-indexing the received 4-D tensor with ``k = p + m*array_p`` and
``l = q + n*array_q`` therefore yields the response of a single
``virtual_kx x virtual_ky`` half-wavelength array: the virtually extended
spatial domain.

Two consecutive subframes are simulated per process: a reference subframe
with all amplitudes at 1 and an information subframe with amplitudes carrying
the encoded measurements. Both share one channel realization (coherence
assumption); noise is independent per tensor and element.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import encode_amplitude
from .scenario import DeviceSet, HapsGeometry, ScenarioConfig

BOLTZMANN = 1.380649e-23
NOISE_REF_TEMP_K = 290.0


@dataclass(frozen=True)
class ChannelRealization:
    """Per-device complex gains and the per-element noise variance."""

    gains: np.ndarray        # (count,) complex: pathloss x Rician fading x LoS phase
    noise_variance: float    # complex noise power per resource element per antenna

    def __post_init__(self) -> None:
        self.gains.setflags(write=False)


@dataclass(frozen=True)
class ReceivedPair:
    """Received symbol tensors of one reference/information subframe pair.

    ``y_ref`` and ``y_info`` have shape (array_p, array_q, symbols_m,
    subcarriers_n) and were generated from the identical channel realization.
    ``v_ref``/``v_info`` are their unfolded virtual-array forms.
    """

    y_ref: np.ndarray
    y_info: np.ndarray
    v_ref: np.ndarray
    v_info: np.ndarray
    channel: ChannelRealization
    channel_coherent: bool = True

    def __post_init__(self) -> None:
        for arr in (self.y_ref, self.y_info, self.v_ref, self.v_info):
            arr.setflags(write=False)


def noise_variance_w(config: ScenarioConfig) -> float:
    """Thermal noise power per resource element: k_B * T0 * df * NF."""
    nf_linear = 10.0 ** (config.noise_figure_db / 10.0)
    return BOLTZMANN * NOISE_REF_TEMP_K * config.subcarrier_spacing_hz * nf_linear


def tx_amplitude_scale(config: ScenarioConfig) -> float:
    """Per-symbol transmit amplitude for the unit reference value."""
    return math.sqrt(1e-3 * 10.0 ** (config.tx_power_dbm / 10.0))


def free_space_pathloss(
    distance_m: np.ndarray | float, wavelength_m: float
) -> np.ndarray | float:
    """Free-space power pathloss (lambda / (4 pi d))^2."""
    d = np.asarray(distance_m, dtype=float)
    return (wavelength_m / (4.0 * np.pi * d)) ** 2


def waveform_phase(
    u: float, v: float, m: int, n: int, geom: HapsGeometry
) -> float:
    """Device symbol phase on resource (m, n) for direction cosines (u, v)."""
    return math.pi * (m * geom.array_p * u + n * geom.array_q * v)


def channel_gain(
    devices: DeviceSet,
    geom: HapsGeometry,
    config: ScenarioConfig,
    rng: np.random.Generator,
) -> ChannelRealization:
    """Draw one channel realization for every device.

    g = sqrt(PL(d)) * exp(-j 2 pi d / lambda) * f, with f a unit-mean-power
    Rician fading coefficient of K-factor ``rician_k_db``. An infinite
    K-factor gives the pure line-of-sight channel f = 1 exactly.
    ``nlos_penalty_db`` attenuates the pathloss.
    """
    pos = devices.positions
    d = np.sqrt(pos[:, 0] ** 2 + pos[:, 1] ** 2 + geom.haps_altitude_m**2)
    pl = free_space_pathloss(d, geom.wavelength_m)
    pl = pl * 10.0 ** (-config.nlos_penalty_db / 10.0)

    k_db = config.rician_k_db
    if math.isinf(k_db) and k_db > 0:
        fading = np.ones(devices.count, dtype=complex)
    else:
        k = 10.0 ** (k_db / 10.0)
        scatter = (
            rng.standard_normal(devices.count)
            + 1j * rng.standard_normal(devices.count)
        ) / np.sqrt(2.0)
        fading = np.sqrt(k / (k + 1.0)) + np.sqrt(1.0 / (k + 1.0)) * scatter

    los_phase = np.exp(-2j * np.pi * d / geom.wavelength_m)
    gains = np.sqrt(pl) * los_phase * fading
    return ChannelRealization(gains=gains, noise_variance=noise_variance_w(config))


def _steering_factors(
    devices: DeviceSet, geom: HapsGeometry, config: ScenarioConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-device virtual-axis steering products U (count, Kx), W (count, Ky).

    U[i, p + m*P] = exp(j pi p u_i) * exp(j pi m P u_i): the antenna steering
    factor times the device's waveform phase factor. Computed as the product
    of the two exponentials, exactly as the waveform is formed. An optional
    per-device timing offset adds a phase ramp across subcarriers.
    """
    p_idx = np.arange(geom.array_p)
    q_idx = np.arange(geom.array_q)
    m_idx = np.arange(geom.symbols_m)
    n_idx = np.arange(geom.subcarriers_n)

    ap = np.exp(1j * np.pi * np.outer(devices.u, p_idx))            # (D, P)
    am = np.exp(1j * np.pi * geom.array_p * np.outer(devices.u, m_idx))  # (D, M)
    bq = np.exp(1j * np.pi * np.outer(devices.v, q_idx))            # (D, Q)
    bn = np.exp(1j * np.pi * geom.array_q * np.outer(devices.v, n_idx))  # (D, N)

    if config.clock_offset_std_s > 0:
        tau = rng.normal(0.0, config.clock_offset_std_s, size=devices.count)
        ramp = np.exp(
            2j * np.pi * config.subcarrier_spacing_hz * np.outer(tau, n_idx)
        )
        bn = bn * ramp

    # k = p + m*P varies p fastest: (D, M, P) -> (D, Kx).
    u_fac = (am[:, :, None] * ap[:, None, :]).reshape(
        devices.count, geom.virtual_kx
    )
    v_fac = (bn[:, :, None] * bq[:, None, :]).reshape(
        devices.count, geom.virtual_ky
    )
    return u_fac, v_fac


def simulate_reception(
    devices: DeviceSet,
    measurements: np.ndarray,
    geom: HapsGeometry,
    config: ScenarioConfig,
    rng: np.random.Generator,
) -> ReceivedPair:
    """Simulate one reference/information subframe pair at the platform.

    All devices superimpose on the same resources. Reference amplitudes are
    the constant 1; information amplitudes encode the measurements. The same
    channel realization drives both tensors; complex white noise of variance
    ``noise_variance_w(config)`` is drawn independently per tensor element.
    A zero-device set yields pure noise tensors.

    Draw order from ``rng``: fading, clock offsets (if enabled), reference
    noise, information noise.
    """
    measurements = np.asarray(measurements, dtype=float)
    if measurements.shape != (devices.count,):
        raise ValueError("need exactly one measurement per device")

    channel = channel_gain(devices, geom, config, rng)
    u_fac, v_fac = _steering_factors(devices, geom, config, rng)
    scale = tx_amplitude_scale(config)
    a_ref = np.ones(devices.count)
    a_info = np.asarray(encode_amplitude(measurements, config), dtype=float)

    def received(amplitudes: np.ndarray) -> np.ndarray:
        coef = channel.gains * amplitudes * scale
        virtual = (u_fac * coef[:, None]).T @ v_fac  # (Kx, Ky)
        y = fold_virtual(virtual, geom)
        sigma = channel.noise_variance
        if sigma > 0:
            shape = y.shape
            noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
            y = y + np.sqrt(sigma / 2.0) * noise
        return y

    y_ref = received(a_ref)
    y_info = received(a_info)
    return ReceivedPair(
        y_ref=y_ref,
        y_info=y_info,
        v_ref=unfold_virtual(y_ref, geom),
        v_info=unfold_virtual(y_info, geom),
        channel=channel,
    )


def unfold_virtual(y: np.ndarray, geom: HapsGeometry) -> np.ndarray:
    """Re-index the 4-D tensor into the virtual array: v[p+m*P, q+n*Q] = y[p,q,m,n]."""
    expected = (geom.array_p, geom.array_q, geom.symbols_m, geom.subcarriers_n)
    if y.shape != expected:
        raise ValueError(f"tensor shape {y.shape} != geometry {expected}")
    return np.ascontiguousarray(
        y.transpose(2, 0, 3, 1).reshape(geom.virtual_kx, geom.virtual_ky)
    )


def fold_virtual(v: np.ndarray, geom: HapsGeometry) -> np.ndarray:
    """Inverse of :func:`unfold_virtual`."""
    expected = (geom.virtual_kx, geom.virtual_ky)
    if v.shape != expected:
        raise ValueError(f"matrix shape {v.shape} != geometry {expected}")
    return np.ascontiguousarray(
        v.reshape(
            geom.symbols_m, geom.array_p, geom.subcarriers_n, geom.array_q
        ).transpose(1, 3, 0, 2)
    )


def simulate_pairs(
    devices: DeviceSet,
    measurements: np.ndarray,
    geom: HapsGeometry,
    config: ScenarioConfig,
    n_pairs: int,
    seed_labels: tuple[object, ...] = (),
) -> list[ReceivedPair]:
    """Simulate several independent subframe pairs of one process.

    Each pair gets a fresh channel realization and fresh noise from the
    ``pair`` substream family of the config seed.
    """
    from .scenario import substream

    if n_pairs < 1:
        raise ValueError("need at least one subframe pair")
    pairs = []
    for i in range(n_pairs):
        rng = substream(config.seed, "pair", *seed_labels, i)
        pairs.append(simulate_reception(devices, measurements, geom, config, rng))
    return pairs
