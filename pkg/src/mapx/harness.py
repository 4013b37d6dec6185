"""Experiment harness: metrics, method runners, sweeps, dataset export, images.

A *scene* bundles one realization of the scenario (field, devices, sampled
measurements); methods reconstruct it from their own observation budgets and
are scored against the field grid with the reconstruction SNR

    SNR = 10 log10(Var(truth) / MSE)    over valid cells,

capped at +100 dB. Sweeps rerun (method x budget x seed) cells on fresh
scenes and emit a CSV with schema method, budget, seed, snr_db, nmse,
valid_frac, wall_ms. Timing is only recorded on request so that repeated
invocations stay byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import os
import time
from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import interchange
from .baseline_wsn import ObservationSet, orthogonal_collect, sblue_estimate
from .field import GroundField, generate_field, sample_field
from .phy import ReceivedPair, simulate_pairs
from .recon_dnn import (
    PointwiseModel,
    TrainingConfig,
    dnn_map,
    reference_model,
    train_online,
)
from .recon_linear import GroundEstimate, divide_and_clip, aoa_transform, reconstruct_linear
from .scenario import (
    DeviceSet,
    HapsGeometry,
    ScenarioConfig,
    haps_geometry,
    place_devices,
    scenario_hash,
    substream,
)

SNR_CAP_DB = 100.0
METHODS = ("linear", "dnn", "sblue")
CSV_FIELDS = ("method", "budget", "seed", "snr_db", "nmse", "valid_frac", "wall_ms")
DEFAULT_RELAY_SAMPLES = 512


def derive_seed(seed: int, *labels: object) -> int:
    """Stable derived integer seed for child scenarios (sweeps, datasets)."""
    text = repr((int(seed), labels)).encode("utf-8")
    return int.from_bytes(
        hashlib.blake2s(text, digest_size=8).digest(), "little"
    ) >> 1


def recon_snr(estimate: GroundEstimate, truth: np.ndarray) -> float:
    """Reconstruction SNR in dB over the estimate's valid cells."""
    truth = np.asarray(truth, dtype=float)
    if truth.shape != estimate.values.shape:
        raise ValueError("truth grid shape does not match the estimate")
    mask = estimate.valid
    if not mask.any():
        raise ValueError("estimate has no valid cells")
    err = estimate.values[mask] - truth[mask]
    mse = float((err * err).mean())
    var = float(truth[mask].var())
    if mse == 0.0:
        return SNR_CAP_DB
    if var == 0.0:
        return -SNR_CAP_DB
    return float(np.clip(10.0 * np.log10(var / mse), -SNR_CAP_DB, SNR_CAP_DB))


def nmse(estimate: GroundEstimate, truth: np.ndarray) -> float:
    """Reconstruction MSE normalized by truth variance, over valid cells."""
    truth = np.asarray(truth, dtype=float)
    mask = estimate.valid
    if not mask.any():
        raise ValueError("estimate has no valid cells")
    err = estimate.values[mask] - truth[mask]
    var = float(truth[mask].var())
    if var == 0.0:
        raise ValueError("truth has zero variance over the valid cells")
    return float((err * err).mean() / var)


@dataclass(frozen=True)
class Scene:
    """One realization of the scenario: field, devices, and measurements."""

    config: ScenarioConfig
    geom: HapsGeometry
    field: GroundField
    devices: DeviceSet
    measurements: np.ndarray

    @property
    def truth(self) -> np.ndarray:
        return self.field.grid


def make_scene(config: ScenarioConfig) -> Scene:
    """Realize field, placement, and device measurements from the config seed."""
    field = generate_field(config)
    devices = place_devices(config)
    measurements = sample_field(field, devices.positions)
    return Scene(
        config=config,
        geom=haps_geometry(config),
        field=field,
        devices=devices,
        measurements=measurements,
    )


def scene_pairs(scene: Scene, budget_subframes: int) -> list[ReceivedPair]:
    """Simulate the subframe pairs funded by an even subframe budget."""
    if budget_subframes < 2 or budget_subframes % 2 != 0:
        raise ValueError("subframe budget must be even and at least 2")
    return simulate_pairs(
        scene.devices,
        scene.measurements,
        scene.geom,
        scene.config,
        budget_subframes // 2,
    )


def relay_training_set(
    scene: Scene, n_samples: int = DEFAULT_RELAY_SAMPLES
) -> tuple[np.ndarray, np.ndarray]:
    """Relayed (position, measurement) pairs gathered by terrestrial stations."""
    count = scene.devices.count
    n = min(n_samples, count)
    rng = substream(scene.config.seed, "relay")
    idx = rng.choice(count, size=n, replace=False)
    return scene.devices.positions[idx], scene.measurements[idx]


def run_method(
    scene: Scene,
    method: str,
    budget_subframes: int,
    train_cfg: TrainingConfig | None = None,
    n_relay: int = DEFAULT_RELAY_SAMPLES,
) -> GroundEstimate:
    """Reconstruct the scene with one method at a subframe budget."""
    if method == "linear":
        pairs = scene_pairs(scene, budget_subframes)
        return reconstruct_linear(pairs, scene.geom, scene.config)
    if method == "dnn":
        pairs = scene_pairs(scene, budget_subframes)
        model = reference_model(scene.geom, scene.config)
        positions, values = relay_training_set(scene, n_relay)
        train_online(
            model,
            pairs,
            positions,
            values,
            scene.geom,
            hyper=train_cfg,
            rng=substream(scene.config.seed, "training"),
        )
        return dnn_map(model, pairs, scene.geom, scene.config)
    if method == "sblue":
        obs = orthogonal_collect(
            scene.devices,
            scene.measurements,
            budget_subframes,
            scene.config,
            substream(scene.config.seed, "wsn"),
        )
        return sblue_estimate(obs, scene.field.kernel, scene.geom, scene.config)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


@dataclass(frozen=True)
class ExperimentResult:
    method: str
    budget: int
    seed: int
    snr_db: float
    nmse: float
    valid_frac: float
    wall_ms: float


def run_sweep(
    config: ScenarioConfig,
    methods: list[str],
    budgets: list[int],
    n_seeds: int,
    train_cfg: TrainingConfig | None = None,
    timing: bool = False,
) -> list[ExperimentResult]:
    """Score every (method, budget, seed) cell on a fresh scene per seed.

    All methods at one seed index share the same field, placement, and
    measurements so comparisons are paired; channel and collection noise use
    method-specific substreams. ``wall_ms`` is 0 unless ``timing`` is set,
    keeping the output bit-reproducible.
    """
    for method in methods:
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
    results: list[ExperimentResult] = []
    for seed_idx in range(n_seeds):
        scene_cfg = config.with_seed(derive_seed(config.seed, "sweep", seed_idx))
        scene = make_scene(scene_cfg)
        for method in methods:
            for budget in budgets:
                start = time.perf_counter()
                estimate = run_method(scene, method, budget, train_cfg=train_cfg)
                wall_ms = (time.perf_counter() - start) * 1e3 if timing else 0.0
                results.append(
                    ExperimentResult(
                        method=method,
                        budget=budget,
                        seed=seed_idx,
                        snr_db=recon_snr(estimate, scene.truth),
                        nmse=nmse(estimate, scene.truth),
                        valid_frac=estimate.valid_fraction,
                        wall_ms=wall_ms,
                    )
                )
    return results


def write_results_csv(results: list[ExperimentResult], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for r in results:
            writer.writerow(
                [
                    r.method,
                    r.budget,
                    r.seed,
                    f"{r.snr_db:.6f}",
                    f"{r.nmse:.9g}",
                    f"{r.valid_frac:.6f}",
                    f"{r.wall_ms:.3f}",
                ]
            )


def pair_input_channels(
    pairs: list[ReceivedPair], geom: HapsGeometry, config: ScenarioConfig
) -> np.ndarray:
    """Post-division clipped AoA amplitude maps, one channel per pair."""
    channels = []
    for pair in pairs:
        b_ref = aoa_transform(pair.v_ref, geom)
        b_info = aoa_transform(pair.v_info, geom)
        amplitudes, _ = divide_and_clip(b_ref, b_info, config)
        channels.append(amplitudes)
    return np.stack(channels)


def dense_observations(scene: Scene, fraction: float = 0.25) -> ObservationSet:
    """Noiseless observations from a random fraction of all devices."""
    count = scene.devices.count
    n_obs = max(1, int(round(fraction * count)))
    rng = substream(scene.config.seed, "dataset-obs")
    idx = rng.choice(count, size=n_obs, replace=False)
    return ObservationSet(
        positions=scene.devices.positions[idx].copy(),
        values=scene.measurements[idx].copy(),
        noise_variance=0.0,
    )


def export_dataset(
    config: ScenarioConfig,
    n_train: int,
    n_val: int,
    out_dir: str,
    n_pairs: int = 4,
    target_fraction: float = 0.25,
) -> dict:
    """Write a training dataset for the offline image-reconstruction model.

    Each example gets a fresh scene. Inputs are the per-pair divided AoA
    amplitude maps (``n_pairs`` channels); the target is the optimal linear
    reconstruction from a dense noiseless observation set on the evaluation
    grid; the true field grid is included for scoring. Returns the top-level
    manifest, which is also written to ``out_dir``.
    """
    if n_train < 1 or n_val < 0:
        raise ValueError("need at least one training example")
    os.makedirs(out_dir, exist_ok=True)
    examples = []
    for index in range(n_train + n_val):
        split = "train" if index < n_train else "val"
        seed = derive_seed(config.seed, "dataset", index)
        scene_cfg = config.with_seed(seed)
        scene = make_scene(scene_cfg)
        pairs = simulate_pairs(
            scene.devices, scene.measurements, scene.geom, scene.config, n_pairs
        )
        inputs = pair_input_channels(pairs, scene.geom, scene.config)
        obs = dense_observations(scene, target_fraction)
        target = sblue_estimate(obs, scene.field.kernel, scene.geom, scene.config)

        name = f"example_{index:04d}"
        example_dir = os.path.join(out_dir, name)
        os.makedirs(example_dir, exist_ok=True)
        tensors = [
            interchange.write_tensor(example_dir, "input", inputs),
            interchange.write_tensor(example_dir, "target", target.values),
            interchange.write_tensor(example_dir, "truth", scene.truth),
        ]
        interchange.write_manifest(
            example_dir,
            tensors,
            scenario_hash(scene_cfg),
            extra={"seed": seed, "split": split, "name": name},
        )
        examples.append({"name": name, "seed": seed, "split": split})

    manifest = {
        "examples": examples,
        "n_train": n_train,
        "n_val": n_val,
        "n_pairs": n_pairs,
        "input_shape": [n_pairs, haps_geometry(config).virtual_kx,
                        haps_geometry(config).virtual_ky],
        "target_shape": [config.eval_grid_side, config.eval_grid_side],
        "scenario_hash": scenario_hash(config),
    }
    interchange.write_manifest(out_dir, [], scenario_hash(config), extra=manifest)
    return manifest


INVALID_RGB = (200, 30, 30)


def heatmap_image(
    values: np.ndarray, valid: np.ndarray | None = None, scale: int = 1
) -> Image.Image:
    """Render a measurement map as an image.

    Values map linearly from [-3, 3] to black..white; invalid cells are drawn
    in red. Row index is the x axis, so the image is transposed to put y up.
    """
    values = np.asarray(values, dtype=float)
    gray = np.clip((values + 3.0) / 6.0, 0.0, 1.0) * 255.0
    gray = gray.astype(np.uint8)
    rgb = np.stack([gray, gray, gray], axis=-1)
    if valid is not None:
        rgb[~valid] = INVALID_RGB
    # (x, y) grid -> image rows top-to-bottom along decreasing y
    rgb = np.transpose(rgb, (1, 0, 2))[::-1]
    image = Image.fromarray(rgb, mode="RGB")
    if scale > 1:
        image = image.resize(
            (image.width * scale, image.height * scale), Image.NEAREST
        )
    return image


def export_heatmap(
    values: np.ndarray,
    path: str,
    valid: np.ndarray | None = None,
    scale: int = 1,
) -> None:
    arr = np.asarray(values, dtype=float)
    check = arr if valid is None else arr[valid]
    if not np.all(np.isfinite(check)):
        raise ValueError("heatmap values must be finite")
    heatmap_image(values, valid, scale).save(path, format="PNG")


def export_panels(
    panels: list[tuple[np.ndarray, np.ndarray | None]],
    path: str,
    scale: int = 1,
    gap: int = 2,
) -> None:
    """Side-by-side comparison image (e.g. truth / baseline / learned methods)."""
    images = [heatmap_image(v, m, scale) for v, m in panels]
    height = max(im.height for im in images)
    width = sum(im.width for im in images) + gap * (len(images) - 1)
    canvas = Image.new("RGB", (width, height), (255, 255, 255))
    x = 0
    for im in images:
        canvas.paste(im, (x, 0))
        x += im.width + gap
    canvas.save(path, format="PNG")
