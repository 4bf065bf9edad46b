"""bciwalk: self-paced idle/walk EEG decoding with a walking-course simulator.

The package covers the full loop: synthetic cued recordings, offline decoder
training with nested cross-validation, threshold calibration, closed-loop
course sessions streamed as NDJSON telemetry, and statistical certification
of purposeful control against a random-walk null model.
"""

from .decoder import (
    DecodingModel,
    KmiDecoder,
    TrainingConfig,
    chance_p_value,
    cross_validate,
    load_model,
    save_model,
    search_band,
    train_decoding_model,
)
from .errors import BciwalkError, DegenerateInputError, InvalidInputError
from .features import ClasswisePca, FisherDiscriminant, InfoDiscriminant
from .mcstats import (
    CompositeScore,
    GaussianKde2d,
    McEnsemble,
    composite,
    evaluate_session,
    level_set_p_value,
    random_walk_mc,
)
from .online import FsmConfig, OnlineFsm, SegmentDecoder, fsm_step, run_calibration
from .preprocess import (
    FilterConfig,
    align_labels,
    bandpass,
    common_average_reference,
    reject_artifact_channels,
)
from .recording import (
    IDLE,
    WALK,
    ChannelMask,
    EegRecording,
    LabelStream,
    read_recording,
    write_recording,
)
from .simulator import (
    SessionResult,
    StopAndGoIntent,
    Track,
    WalkingCourse,
    decoder_source,
    random_walk_source,
    replay_source,
    run_session,
    step_source,
)
from .spectral import SpectralTrial, TrialSet, extract_trials, psd_bins
from .synth import SegmentStream, SynthSpec, TimedIntentScript, generate_recording

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
