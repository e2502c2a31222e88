"""Desk-scale uplink channel-estimation workbench.

Generates fading-channel datasets augmented with receiver impairments, runs
LS / PDP-MMSE / CNN channel estimation through a staged receive pipeline,
and quantifies accuracy (NMSE) and link quality (uncoded-QPSK SER) across
SNR sweeps and impairment ablations.
"""

from .channel import (
    CarrierGrid,
    CfrTensor,
    ChannelRealization,
    TdlProfile,
    build_grid,
    cfr_at,
    gen_channel,
    gen_pilot_sequence,
    load_profile,
    make_profile,
    preset_profile,
)
from .dataset import (
    DatasetHeader,
    DatasetRecord,
    import_external_cfr,
    read_dataset,
    split,
    write_dataset,
)
from .estimators import (
    FullGridEstimate,
    LsEstimate,
    OffsetEstimate,
    compensate_to,
    estimate_cfo,
    estimate_cfo_avg,
    estimate_to,
    interpolate_freq,
    ls_extract,
    mmse_pdp_estimate,
    normalize,
    denormalize,
    repair_dc,
    run_pipeline,
)
from .evaluate import (
    AblationCase,
    AblationTable,
    SweepReport,
    ablation_run,
    nmse_db,
    ser_link,
    snr_sweep,
    sweep_dataset,
)
from .generate import GeneratorSpec, generate_records, received_truth, synthesize_record
from .impairments import (
    EmpiricalDist,
    ImpairmentConfig,
    ImpairmentDraw,
    ImpairmentToggles,
    add_awgn,
    apply_antenna_scaling,
    apply_cfo,
    apply_chain,
    apply_dc_leakage,
    apply_rx_filter,
    apply_timing_offset,
    default_ripple_profile,
    sample_impairments,
)
from .nn import DenoiserModel, conv2d, identity_model, infer, load_model, pack_input, unpack_output, write_weights

__version__ = "0.1.0"
