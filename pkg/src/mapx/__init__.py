"""Massive non-orthogonal direct device-to-platform field imaging toolkit."""

from .scenario import (
    ConfigError,
    DeviceSet,
    HapsGeometry,
    ScenarioConfig,
    direction_cosines_to_ground,
    ground_to_direction_cosines,
    haps_geometry,
    load_config,
    place_devices,
    scenario_hash,
    substream,
)
from .field import (
    CorrelationKernel,
    GroundField,
    decode_amplitude,
    encode_amplitude,
    generate_field,
    sample_field,
)
from .phy import (
    ChannelRealization,
    ReceivedPair,
    channel_gain,
    fold_virtual,
    simulate_pairs,
    simulate_reception,
    unfold_virtual,
    waveform_phase,
)
from .recon_linear import (
    AoAMap,
    GroundEstimate,
    aoa_to_ground,
    aoa_transform,
    divide_and_clip,
    reconstruct_linear,
)
from .recon_dnn import (
    PointwiseModel,
    TrainingConfig,
    dnn_estimate,
    dnn_map,
    filtered_beamform,
    load_model,
    reference_model,
    save_model,
    train_online,
)
from .baseline_wsn import ObservationSet, orthogonal_collect, sblue_estimate
from .harness import (
    ExperimentResult,
    Scene,
    export_dataset,
    export_heatmap,
    make_scene,
    nmse,
    recon_snr,
    run_method,
    run_sweep,
)

__version__ = "0.1.0"
