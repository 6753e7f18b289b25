"""groovekit: expressive drum performance modeling on a 16th-note grid.

Parses Standard MIDI Files into a hits/velocities/offsets groove grid,
implements the forward compressions (score extraction, voice removal, tap
flattening) and trains models that invert them: humanization, infilling and
tap-to-drum.
"""

from .baselines import (
    LinearParams,
    TrainStats,
    knn_humanize,
    knn_similarity,
    linear_fit,
    linear_humanize,
    quantized_baseline,
)
from .checkpoint import Checkpoint, KnnParams, load_checkpoint, save_checkpoint
from .errors import GrooveKitError
from .metrics import (
    MetricsReport,
    bootstrap_ci,
    distribution_kl,
    evaluate_pairs,
    gaussian_kl,
    onbeat_offbeat_stats,
    timing_mae_ms,
    timing_mse_16th,
)
from .midi_io import MidiSequence, NoteEvent, parse_smf, tick_to_seconds, write_smf
from .neural import (
    MLPParams,
    Seq2SeqParams,
    TrainConfig,
    gradient_check,
    groove_transfer_humanize,
    humanize,
    infill,
    mlp_humanize,
    tap2drum,
    train_mlp,
    train_seq2seq,
)
from .representation import (
    CANONICAL_PITCHES,
    CATEGORY_NAMES,
    GrooveTensor,
    TimedNote,
    load_corpus,
    map_pitch,
    quantize,
    save_corpus,
    to_midi,
    unit_to_velocity,
    velocity_to_unit,
    windows,
)
from .transforms import TapTensor, flatten_to_taps, remove_voice, taps_from_midi, to_score

__version__ = "0.1.0"
