"""Monte Carlo of serialized charge and spin sequences over an NV ensemble."""
from .camera import CameraModel, baseline_walk, expected_photons, pgm_bytes, read_pgm, render_frame, write_pgm
from .conditional import InitTrajectory, run_conditional_init, run_unconditional_init
from .core import (
    ORIENTATIONS,
    ChargePolarizeSerial,
    Ionize,
    MicrowavePulse,
    NvCenter,
    RatesConfig,
    Readout,
    SccSerial,
    SequenceConfig,
    ShotRecord,
    ShotRecords,
    SpinEcho,
    SpinPolarizeGlobal,
    default_thresholds,
    run_shots,
)
from .experiments import (
    REINIT_RATES,
    PATTERNS,
    correlation_experiment,
    correlation_sequence,
    default_brightness,
    default_layout,
    ideal_correlation_signs,
    isolated_spin_snr,
    readout_fidelities,
    spin_reference_sequence,
    tune_scc_fidelities,
    usable_ids,
)
from .io import (
    read_records_binary,
    read_records_csv,
    records_from_bytes,
    records_to_bytes,
    records_to_csv,
    write_records_binary,
    write_records_csv,
)
