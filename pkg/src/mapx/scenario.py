"""Scenario configuration, platform geometry, and device placement.

Coordinate conventions used throughout the package:

* The monitored area is a square of side ``area_side_m`` centered at the
  origin of the ground plane (x east, y north, z up).
* The receiving platform hovers at ``(0, 0, haps_altitude_m)``, i.e. directly
  above the area center, carrying a ``array_p x array_q`` planar array at
  half-wavelength element spacing.
* The direction cosines ``(u, v)`` of a ground point are the x and y
  components of the unit vector from the platform toward that point. Every
  point of the ground plane satisfies ``u**2 + v**2 < 1``.

All randomness in the package is derived from the single config ``seed``
through :func:`substream`, which builds named, independent generators.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, fields, replace

import numpy as np

C_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """A scenario configuration failed validation or parsing."""


@dataclass(frozen=True)
class ScenarioConfig:
    """All physical and protocol parameters of one simulated deployment.

    Defaults are the full-scale deployment: a 40 km x 40 km area at
    31.25 devices/km^2 (50,000 devices), a 16x16 array, 12x12 resource
    elements per subframe, 2.5 GHz carrier, 0 dBm transmit power and
    Rician fading.
    """

    area_side_m: float = 40_000.0
    device_density_per_km2: float = 31.25
    haps_altitude_m: float = 20_000.0
    array_p: int = 16
    array_q: int = 16
    symbols_m: int = 12
    subcarriers_n: int = 12
    carrier_hz: float = 2.5e9
    tx_power_dbm: float = 0.0
    subcarrier_spacing_hz: float = 15e3
    noise_figure_db: float = 5.0
    rician_k_db: float = 10.0
    field_corr_len_m: float = 2_000.0
    encode_min: float = 0.2
    encode_max: float = 1.8
    clip_epsilon: float = 1e-3
    eval_grid_side: int = 192
    seed: int = 1
    nlos_penalty_db: float = 0.0
    clock_offset_std_s: float = 0.0
    wsn_obs_snr_db: float = 20.0

    def __post_init__(self) -> None:
        def require(ok: bool, name: str, why: str) -> None:
            if not ok:
                raise ConfigError(f"{name}: {why}")

        require(self.area_side_m > 0, "area_side_m", "must be positive")
        require(self.device_density_per_km2 >= 0, "device_density_per_km2",
                "must be non-negative")
        require(self.haps_altitude_m > 0, "haps_altitude_m", "must be positive")
        require(self.array_p >= 2, "array_p", "must be at least 2")
        require(self.array_q >= 2, "array_q", "must be at least 2")
        require(self.symbols_m >= 1, "symbols_m", "must be at least 1")
        require(self.subcarriers_n >= 1, "subcarriers_n", "must be at least 1")
        require(self.carrier_hz > 0, "carrier_hz", "must be positive")
        require(self.subcarrier_spacing_hz > 0, "subcarrier_spacing_hz",
                "must be positive")
        require(self.field_corr_len_m > 0, "field_corr_len_m", "must be positive")
        require(self.encode_min > 0, "encode_min", "must be positive")
        require(self.encode_max > self.encode_min, "encode_max",
                "must exceed encode_min")
        require(self.clip_epsilon > 0, "clip_epsilon", "must be positive")
        require(self.eval_grid_side >= 2, "eval_grid_side", "must be at least 2")
        require(self.clock_offset_std_s >= 0, "clock_offset_std_s",
                "must be non-negative")

    def expected_device_count(self) -> int:
        area_km2 = (self.area_side_m / 1000.0) ** 2
        return int(round(self.device_density_per_km2 * area_km2))

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=int(seed))


_INT_FIELDS = {"array_p", "array_q", "symbols_m", "subcarriers_n",
               "eval_grid_side", "seed"}
_FIELD_NAMES = [f.name for f in fields(ScenarioConfig)]


def load_config(path: str, seed: int | None = None) -> ScenarioConfig:
    """Load a scenario from a flat ``key = value`` text file.

    Keys are exactly the :class:`ScenarioConfig` field names; ``#`` starts a
    comment; omitted keys keep the full-scale defaults. ``seed``, when given,
    overrides the file's seed.
    """
    values: dict[str, object] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc

    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, text = line.partition("=")
        key, text = key.strip(), text.strip()
        if key not in _FIELD_NAMES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            num = float(text)
        except ValueError as exc:
            raise ConfigError(f"{key}: not a number: {text!r}") from exc
        if key in _INT_FIELDS:
            if not num.is_integer():
                raise ConfigError(f"{key}: must be an integer, got {text!r}")
            values[key] = int(num)
        else:
            values[key] = num

    if seed is not None:
        values["seed"] = int(seed)
    return ScenarioConfig(**values)


def save_config(config: ScenarioConfig, path: str) -> None:
    """Write a config back out in the flat key/value format."""
    with open(path, "w", encoding="utf-8") as fh:
        for name in _FIELD_NAMES:
            fh.write(f"{name} = {getattr(config, name)!r}\n")


def scenario_hash(config: ScenarioConfig) -> str:
    """Stable short hash identifying a scenario (all fields, seed included)."""
    text = "\n".join(f"{name}={getattr(config, name)!r}" for name in _FIELD_NAMES)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def substream(seed: int, *labels: object) -> np.random.Generator:
    """Derive a named, independent random generator from the config seed.

    Labels may be strings or integers; string labels are hashed with a
    stable digest so the derivation is identical across runs and platforms.
    """
    entropy: list[int] = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for label in labels:
        if isinstance(label, str):
            digest = hashlib.blake2s(label.encode("utf-8"), digest_size=8).digest()
            entropy.append(int.from_bytes(digest, "little"))
        else:
            entropy.append(int(label) & 0xFFFFFFFFFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass(frozen=True)
class HapsGeometry:
    """Platform position, wavelength, and physical/virtual array extents."""

    haps_altitude_m: float
    wavelength_m: float
    array_p: int
    array_q: int
    symbols_m: int
    subcarriers_n: int

    @property
    def haps_position(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.haps_altitude_m])

    @property
    def element_spacing_m(self) -> float:
        # Half wavelength: required for the alias-free bin <-> direction map.
        return self.wavelength_m / 2.0

    @property
    def virtual_kx(self) -> int:
        return self.array_p * self.symbols_m

    @property
    def virtual_ky(self) -> int:
        return self.array_q * self.subcarriers_n


def haps_geometry(config: ScenarioConfig) -> HapsGeometry:
    return HapsGeometry(
        haps_altitude_m=config.haps_altitude_m,
        wavelength_m=C_LIGHT / config.carrier_hz,
        array_p=config.array_p,
        array_q=config.array_q,
        symbols_m=config.symbols_m,
        subcarriers_n=config.subcarriers_n,
    )


def ground_to_direction_cosines(
    positions: np.ndarray, geom: HapsGeometry
) -> tuple[np.ndarray, np.ndarray]:
    """Map ground positions (..., 2) to direction cosines (u, v).

    ``u = x / r`` and ``v = y / r`` with ``r`` the slant range to the
    platform. The map is injective on the ground plane and continuous.
    """
    pos = np.asarray(positions, dtype=float)
    x, y = pos[..., 0], pos[..., 1]
    r = np.sqrt(x * x + y * y + geom.haps_altitude_m**2)
    return x / r, y / r


def direction_cosines_to_ground(
    u: np.ndarray, v: np.ndarray, geom: HapsGeometry
) -> np.ndarray:
    """Invert :func:`ground_to_direction_cosines`; requires u^2 + v^2 < 1."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    w2 = 1.0 - u * u - v * v
    if np.any(w2 <= 0):
        raise ValueError("direction cosines must satisfy u^2 + v^2 < 1")
    r = geom.haps_altitude_m / np.sqrt(w2)
    return np.stack([u * r, v * r], axis=-1)


@dataclass(frozen=True)
class DeviceSet:
    """Device positions on the ground plane with their direction cosines."""

    positions: np.ndarray  # (count, 2), meters
    u: np.ndarray          # (count,)
    v: np.ndarray          # (count,)

    def __post_init__(self) -> None:
        for arr in (self.positions, self.u, self.v):
            arr.setflags(write=False)

    @property
    def count(self) -> int:
        return self.positions.shape[0]


def place_devices(
    config: ScenarioConfig, rng: np.random.Generator | None = None
) -> DeviceSet:
    """Place devices i.i.d. uniformly over the square area.

    The count is ``round(density * area)``. Positions are drawn from the
    ``placement`` substream of the config seed unless an explicit generator
    is supplied, so equal configs give identical device sets.
    """
    count = config.expected_device_count()
    if count <= 0:
        raise ValueError("computed device count is zero; increase density or area")
    if rng is None:
        rng = substream(config.seed, "placement")
    half = config.area_side_m / 2.0
    positions = rng.uniform(-half, half, size=(count, 2))
    u, v = ground_to_direction_cosines(positions, haps_geometry(config))
    return DeviceSet(positions=positions, u=u, v=v)
