"""Trained pointwise estimation: adaptive beamforming window plus soft clipping.

Two small dense networks wrap the linear pipeline. A filter network maps a
query direction (u, v) to a real window of length ``virtual_kx`` that is
applied separably along both virtual-array axes before beamforming:

    B(u, v) = sum_{k,l} w[k] w[l] v[k,l] exp(-j pi (k u + l v))

The raw statistic is the per-pair real quotient Re(B_info / B_ref). A
soft-clipping stage replaces the linear method's hard truncation: the clip
network learns a residual correction on top of the hard clip,

    amplitude(r) = clamp(r, encode_min, encode_max) + clip_net(r),

applied to each pair's ratio before the pairwise mean (the same robust
ordering the linear method uses, which keeps one heavy-tailed pair from
poisoning the average). At initialization the clip residual and the window
deviation are exactly zero (all-ones window), so the estimator coincides
with the linear method and training starts from that proven baseline. Look
directions are quantized to the AoA bin grid, matching the linear method's
nearest-bin ground mapping; the filter network sees the exact (u, v). Both
networks train jointly online on relayed (position, measurement) pairs by
minibatch gradient descent on the squared error in measurement units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .field import CLAMP_SIGMA
from .nn import Adam, Mlp, stack_gradients
from .phy import ReceivedPair
from .recon_linear import (
    GroundEstimate,
    bin_axis,
    eval_grid_direction_cosines,
    nearest_bin,
)
from .scenario import (
    HapsGeometry,
    ScenarioConfig,
    ground_to_direction_cosines,
    substream,
)

FILTER_HIDDEN = (96, 192)
CLIP_WIDTHS = (1, 3, 3, 1)
MODEL_FORMAT = "mapx-pointwise"
MODEL_VERSION = 1


@dataclass
class TrainingConfig:
    """Hyperparameters for online training.

    A fraction of the relayed pairs is held out; the model snapshot with the
    best held-out loss is returned, guarding against overfitting the relay
    set (device positions are exact training targets, so the pointwise loss
    can be driven far below what generalizes between devices).
    """

    steps: int = 2000
    batch_size: int = 64
    learning_rate: float = 1e-3
    val_fraction: float = 0.25
    val_every: int = 10


@dataclass
class PointwiseModel:
    """Filter and soft-clip networks with the scenario constants they need."""

    filter_net: Mlp
    clip_net: Mlp
    encode_min: float
    encode_max: float
    clip_epsilon: float
    n_bins: int

    def parameters(self) -> list[np.ndarray]:
        return self.filter_net.parameters() + self.clip_net.parameters()

    @property
    def decode_slope(self) -> float:
        return 2.0 * CLAMP_SIGMA / (self.encode_max - self.encode_min)

    def window(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Beamforming window(s) for direction cosines; (B, n_bins)."""
        uv = np.stack([np.atleast_1d(u), np.atleast_1d(v)], axis=-1)
        return self.filter_net.forward(uv)

    def soft_clip(self, r: np.ndarray) -> np.ndarray:
        """Learned clipping of raw ratios to encoded-amplitude units."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        hard = np.clip(r, self.encode_min, self.encode_max)
        return hard + self.clip_net.forward(r[:, None])[:, 0]


def reference_model(
    geom: HapsGeometry,
    config: ScenarioConfig,
    rng: np.random.Generator | None = None,
) -> PointwiseModel:
    """Model initialized to reproduce the linear estimator exactly.

    The filter net's output layer starts at bias 1 with zero weights (the
    all-ones window) and the clip net's output layer at zero (no residual).
    Hidden layers carry standard random init, so output-layer gradients
    differ across units and training leaves the baseline immediately.
    Nonzero output weights would leak window ripple into near-degenerate
    bins, where the quotient amplifies it past any useful tolerance.
    """
    if geom.virtual_kx != geom.virtual_ky:
        raise ValueError("pointwise model requires a square virtual array")
    if rng is None:
        rng = substream(config.seed, "model-init")
    filter_net = Mlp(
        (2, *FILTER_HIDDEN, geom.virtual_kx),
        hidden_activation="relu",
        rng=rng,
        out_weight_std=0.0,
        out_bias=1.0,
    )
    clip_net = Mlp(
        CLIP_WIDTHS,
        hidden_activation="tanh",
        rng=rng,
        out_weight_std=0.0,
        out_bias=0.0,
    )
    return PointwiseModel(
        filter_net=filter_net,
        clip_net=clip_net,
        encode_min=config.encode_min,
        encode_max=config.encode_max,
        clip_epsilon=config.clip_epsilon,
        n_bins=geom.virtual_kx,
    )


def filtered_beamform(
    v_ref: np.ndarray,
    v_info: np.ndarray,
    u: float,
    v: float,
    window: np.ndarray,
    clip_epsilon: float,
) -> tuple[float, bool]:
    """Windowed beamform ratio of one pair at one direction.

    Returns (ratio, ok); ``ok`` is False when the reference beamform is
    degenerate: |B_ref| <= clip_epsilon * (window energy) * max|v_ref|.
    Degenerate ratios are reported as 0 and must be excluded by the caller.
    """
    window = np.asarray(window, dtype=float)
    if window.shape != (v_ref.shape[0],):
        raise ValueError("window length must equal the virtual-array axis")
    eu = np.exp(-1j * np.pi * np.arange(v_ref.shape[0]) * u)
    ev = np.exp(-1j * np.pi * np.arange(v_ref.shape[1]) * v)
    a = window * eu
    c = window * ev
    s_ref = a @ v_ref @ c
    s_info = a @ v_info @ c
    energy = float(window @ window)
    threshold = clip_epsilon * energy * np.abs(v_ref).max()
    if not np.abs(s_ref) > threshold:
        return 0.0, False
    ratio = (s_info * np.conj(s_ref)).real / abs(s_ref) ** 2
    return float(ratio), True


class _PairCache:
    """Stacked virtual tensors of the subframe pairs plus their peak magnitudes."""

    def __init__(self, pairs: list[ReceivedPair]):
        if not pairs:
            raise ValueError("need at least one subframe pair")
        self.v_ref = np.stack([p.v_ref for p in pairs])    # (P, K, K)
        self.v_info = np.stack([p.v_info for p in pairs])
        self.peak_ref = np.abs(self.v_ref).max(axis=(1, 2))  # (P,)
        self.n_pairs = len(pairs)


def _snap_steering(
    u: np.ndarray, v: np.ndarray, n_bins: int
) -> tuple[np.ndarray, np.ndarray]:
    """Steering rows exp(-j pi k u_bin) for the nearest bins of (u, v)."""
    axis = bin_axis(n_bins)
    k = np.arange(n_bins)
    u_snap = axis[nearest_bin(u, n_bins)]
    v_snap = axis[nearest_bin(v, n_bins)]
    eu = np.exp(-1j * np.pi * np.outer(u_snap, k))
    ev = np.exp(-1j * np.pi * np.outer(v_snap, k))
    return eu, ev


def _batch_ratios(
    model: PointwiseModel,
    cache: _PairCache,
    windows: np.ndarray,
    eu: np.ndarray,
    ev: np.ndarray,
    keep_grad: bool = False,
):
    """Raw ratios of every (sample, pair) with the degeneracy mask.

    Returns (ratios (B, P), ok (B, P), grad_ctx). ``grad_ctx`` carries the
    intermediates needed by :func:`_ratio_window_gradients` when requested.
    """
    a = windows * eu                     # (B, K) complex
    c = windows * ev
    energy = (windows * windows).sum(axis=1)  # (B,)
    b = windows.shape[0]
    ratios = np.zeros((b, cache.n_pairs))
    ok = np.zeros((b, cache.n_pairs), dtype=bool)
    ctx = [] if keep_grad else None
    for p in range(cache.n_pairs):
        t_ref = a @ cache.v_ref[p]       # (B, K)
        t_info = a @ cache.v_info[p]
        s_ref = (t_ref * c).sum(axis=1)  # (B,)
        s_info = (t_info * c).sum(axis=1)
        mag2 = (s_ref * np.conj(s_ref)).real
        threshold = model.clip_epsilon * energy * cache.peak_ref[p]
        ok_p = np.abs(s_ref) > threshold
        ratio_p = np.zeros(b)
        np.divide((s_info * np.conj(s_ref)).real, mag2, out=ratio_p, where=ok_p)
        ratios[:, p] = ratio_p
        ok[:, p] = ok_p
        if keep_grad:
            ctx.append((s_ref, s_info, t_ref, t_info))
    return ratios, ok, (a, c, ctx)


def _ratio_window_gradients(
    cache: _PairCache,
    grad_ratio: np.ndarray,
    windows: np.ndarray,
    eu: np.ndarray,
    ev: np.ndarray,
    grad_ctx,
    ok: np.ndarray,
) -> np.ndarray:
    """Backpropagate d(loss)/d(ratio) (B, P) to the windows (B, K).

    For S(w) = (w * eu) V (w * ev) the window derivative is
    dS/dw = eu * (V (w*ev)) + ev * ((w*eu) V); the quotient rule for
    r = Re(S_i conj(S_r)) / |S_r|^2 is folded in through the complex
    cograds g_i = conj(S_r)/|S_r|^2 and g_r = conj(S_i)/|S_r|^2 - 2 r g_i*.
    """
    a, c, ctx = grad_ctx
    grad_w = np.zeros_like(windows)
    for p in range(cache.n_pairs):
        s_ref, s_info, t_ref, t_info = ctx[p]
        gp = grad_ratio[:, p] * ok[:, p]
        if not gp.any():
            continue
        mag2 = (s_ref * np.conj(s_ref)).real
        safe = np.where(ok[:, p], mag2, 1.0)
        ratio = np.where(
            ok[:, p], (s_info * np.conj(s_ref)).real / safe, 0.0
        )
        g_i = np.conj(s_ref) / safe
        g_r = np.conj(s_info) / safe - 2.0 * ratio * np.conj(s_ref) / safe
        # dS/dw rows for both tensors; V^T (w*eu) = row (a @ V), V (w*ev):
        r_ref = c @ cache.v_ref[p].T     # (B, K) = (V (w*ev))^T rows
        r_info = c @ cache.v_info[p].T
        ds_ref = eu * r_ref + ev * t_ref
        ds_info = eu * r_info + ev * t_info
        contrib = (g_i[:, None] * ds_info + g_r[:, None] * ds_ref).real
        grad_w += gp[:, None] * contrib
    return grad_w


def _decode(model: PointwiseModel, amp: np.ndarray) -> np.ndarray:
    """Clamped affine decode from amplitude to measurement units."""
    a = np.clip(amp, model.encode_min, model.encode_max)
    return (a - model.encode_min) * model.decode_slope - CLAMP_SIGMA


def _estimate_batch(
    model: PointwiseModel,
    cache: _PairCache,
    u: np.ndarray,
    v: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Decoded estimates and validity for a batch of query directions."""
    windows = model.window(u, v)
    eu, ev = _snap_steering(u, v, model.n_bins)
    ratios, ok, _ = _batch_ratios(model, cache, windows, eu, ev)
    n_ok = ok.sum(axis=1)
    valid = n_ok > 0
    amp = model.soft_clip(ratios.reshape(-1)).reshape(ratios.shape)
    amp_mean = np.divide(
        (amp * ok).sum(axis=1),
        np.maximum(n_ok, 1),
        out=np.zeros(ratios.shape[0]),
        where=valid,
    )
    values = _decode(model, amp_mean)
    values[~valid] = 0.0
    return values, valid


def dnn_estimate(
    model: PointwiseModel,
    pairs: list[ReceivedPair],
    position: np.ndarray,
    geom: HapsGeometry,
) -> float:
    """Estimate the measurement at one ground position.

    The query maps to its direction cosines; the look direction is quantized
    to the nearest AoA bin; per-pair ratios are soft-clipped and averaged
    over the non-degenerate pairs. Raises if every pair is degenerate at the
    query.
    """
    cache = _PairCache(pairs)
    u, v = ground_to_direction_cosines(np.asarray(position, dtype=float), geom)
    values, valid = _estimate_batch(
        model, cache, np.atleast_1d(u), np.atleast_1d(v)
    )
    if not valid[0]:
        raise ValueError("all subframe pairs are degenerate at the query position")
    return float(values[0])


def dnn_map(
    model: PointwiseModel,
    pairs: list[ReceivedPair],
    geom: HapsGeometry,
    config: ScenarioConfig,
) -> GroundEstimate:
    """Pointwise estimation repeated over the evaluation grid."""
    cache = _PairCache(pairs)
    u, v = eval_grid_direction_cosines(config, geom)
    values, valid = _estimate_batch(model, cache, u.ravel(), v.ravel())
    g = config.eval_grid_side
    return GroundEstimate(
        values=values.reshape(g, g), valid=valid.reshape(g, g)
    )


def _holdout_loss(
    model: PointwiseModel,
    cache: _PairCache,
    uv: np.ndarray,
    eu: np.ndarray,
    ev: np.ndarray,
    targets: np.ndarray,
) -> float:
    """Squared-error loss of the current model on a fixed point set."""
    windows = model.filter_net.forward(uv)
    ratios, ok, _ = _batch_ratios(model, cache, windows, eu, ev)
    n_ok = ok.sum(axis=1)
    included = n_ok > 0
    residual = model.clip_net.forward(ratios.reshape(-1, 1))
    amp = np.clip(ratios, model.encode_min, model.encode_max) + residual.reshape(
        ratios.shape
    )
    amp_mean = (amp * ok).sum(axis=1) / np.maximum(n_ok, 1)
    est = (amp_mean - model.encode_min) * model.decode_slope - CLAMP_SIGMA
    if not included.any():
        return float("inf")
    err = est[included] - targets[included]
    return float((err * err).mean())


def train_online(
    model: PointwiseModel,
    pairs: list[ReceivedPair],
    positions: np.ndarray,
    measurements: np.ndarray,
    geom: HapsGeometry,
    hyper: TrainingConfig | None = None,
    rng: np.random.Generator | None = None,
) -> list[float]:
    """Jointly train both networks on relayed (position, measurement) pairs.

    Minibatch gradient descent on the squared error between the model
    estimate and the relayed measurement, in measurement units. The decoded
    estimate inside the loss uses the unclamped affine decode so gradients
    keep flowing at the range boundary. A held-out slice of the relay set
    selects the returned parameters. Returns the per-step loss trace.
    """
    if hyper is None:
        hyper = TrainingConfig()
    if rng is None:
        rng = np.random.default_rng(0)
    positions = np.asarray(positions, dtype=float)
    measurements = np.asarray(measurements, dtype=float)
    if len(positions) == 0:
        raise ValueError("empty training set")
    if positions.shape[0] != measurements.shape[0]:
        raise ValueError("positions and measurements differ in length")

    cache = _PairCache(pairs)
    u_all, v_all = ground_to_direction_cosines(positions, geom)
    eu_all, ev_all = _snap_steering(u_all, v_all, model.n_bins)
    uv_all = np.stack([u_all, v_all], axis=-1)

    n_total = len(positions)
    n_val = int(hyper.val_fraction * n_total) if n_total >= 2 else 0
    perm = rng.permutation(n_total)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    params = model.parameters()

    def holdout() -> float:
        return _holdout_loss(
            model, cache, uv_all[val_idx], eu_all[val_idx], ev_all[val_idx],
            measurements[val_idx],
        )

    best_val = holdout() if n_val else float("inf")
    best_params = [p.copy() for p in params]

    optimizer = Adam(params, lr=hyper.learning_rate)
    slope = model.decode_slope
    losses: list[float] = []

    for step in range(hyper.steps):
        idx = train_idx[rng.integers(0, len(train_idx), size=hyper.batch_size)]
        uv = uv_all[idx]
        eu, ev = eu_all[idx], ev_all[idx]
        target = measurements[idx]

        windows, f_cache = model.filter_net.forward_cached(uv)
        ratios, ok, grad_ctx = _batch_ratios(
            model, cache, windows, eu, ev, keep_grad=True
        )
        n_ok = ok.sum(axis=1)
        included = n_ok > 0
        if not included.any():
            raise ValueError("every sample in the batch is degenerate")
        denom = np.maximum(n_ok, 1)

        residual, c_cache = model.clip_net.forward_cached(
            ratios.reshape(-1, 1)
        )
        hard = np.clip(ratios, model.encode_min, model.encode_max)
        amp = hard + residual.reshape(ratios.shape)
        amp_mean = (amp * ok).sum(axis=1) / denom
        est = (amp_mean - model.encode_min) * slope - CLAMP_SIGMA

        err = np.where(included, est - target, 0.0)
        n_inc = int(included.sum())
        losses.append(float((err[included] ** 2).mean()))

        d_est = 2.0 * err / n_inc
        d_amp = (d_est * slope / denom)[:, None] * ok
        cw, cb, d_clip_in = model.clip_net.backward(
            c_cache, d_amp.reshape(-1, 1)
        )
        in_range = (ratios >= model.encode_min) & (ratios <= model.encode_max)
        d_ratio = d_amp * in_range + d_clip_in.reshape(ratios.shape) * ok
        d_windows = _ratio_window_gradients(
            cache, d_ratio, windows, eu, ev, grad_ctx, ok
        )
        fw, fb, _ = model.filter_net.backward(f_cache, d_windows)
        optimizer.step(
            stack_gradients(fw, fb) + stack_gradients(cw, cb)
        )

        if n_val and ((step + 1) % hyper.val_every == 0 or step == hyper.steps - 1):
            val = holdout()
            if val < best_val:
                best_val = val
                best_params = [p.copy() for p in params]

    if n_val:
        for p, best in zip(params, best_params):
            p[...] = best
    return losses


def save_model(model: PointwiseModel, path: str) -> None:
    """Write the model as a one-line JSON header plus packed float64 parameters.

    Parameter order: for each network (filter, then clip), per layer the
    weight matrix row-major then the bias vector, little-endian float64.
    """
    header = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "filter_widths": list(model.filter_net.widths),
        "filter_activation": model.filter_net.hidden_activation,
        "clip_widths": list(model.clip_net.widths),
        "clip_activation": model.clip_net.hidden_activation,
        "encode_min": model.encode_min,
        "encode_max": model.encode_max,
        "clip_epsilon": model.clip_epsilon,
        "n_bins": model.n_bins,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("ascii") + b"\n")
        for param in model.parameters():
            fh.write(param.astype("<f8").tobytes(order="C"))


def load_model(path: str) -> PointwiseModel:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    header = json.loads(header_line.decode("ascii"))
    if header.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a pointwise model file: {path}")
    if header.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {header.get('version')}")
    filter_net = Mlp(header["filter_widths"], header["filter_activation"])
    clip_net = Mlp(header["clip_widths"], header["clip_activation"])
    model = PointwiseModel(
        filter_net=filter_net,
        clip_net=clip_net,
        encode_min=header["encode_min"],
        encode_max=header["encode_max"],
        clip_epsilon=header["clip_epsilon"],
        n_bins=header["n_bins"],
    )
    flat = np.frombuffer(blob, dtype="<f8")
    offset = 0
    for param in model.parameters():
        chunk = flat[offset:offset + param.size]
        if chunk.size != param.size:
            raise ValueError("model file truncated")
        param[...] = chunk.reshape(param.shape)
        offset += param.size
    if offset != flat.size:
        raise ValueError("model file has trailing data")
    return model
