"""
Named constants used throughout tfdiff.

Constants are grouped into small namespace classes so call sites read as
``Schedule.T`` or ``Cseq.MAGIC`` instead of bare literals. The schedule and
training defaults reproduce the published time-frequency diffusion setup; the
desk-scale values keep tests and laptop runs tractable.
"""


class Schedule:
    """Diffusion schedule defaults."""

    T = 300
    BETA_START = 1e-4
    BETA_END = 0.03
    BLUR_START = 1e-3
    BLUR_END = 0.3

    # Converging preset: drives the residual signal weight below 1e-3
    DESK_BETA_END = 0.4


class Signal:
    """Signal container and preprocessing defaults."""

    DESK_LENGTH = 64


class Ssim:
    """Complex SSIM window and stabilizer constants."""

    WINDOW = 8
    STRIDE = 4
    K1 = 0.01
    K2 = 0.03


class Model:
    """Hierarchical diffusion transformer defaults (toy size)."""

    SPATIAL_DIM = 8
    TEMPORAL_LENGTH = 64
    HIDDEN_DIM = 32
    HEADS = 2
    BLOCKS_PER_STAGE = 2
    STEP_EMBED_DIM = 128
    FF_MULTIPLIER = 4
    DROPOUT = 0.1
    PME_BASE = 10000.0
    NORM_EPS = 1e-5


class Train:
    """Optimizer, EMA and learning-rate defaults."""

    LR = 1e-3
    LR_DECAY = 0.5
    LR_DECAY_INTERVAL = 10_000
    EMA_DECAY = 0.999
    ADAM_BETA1 = 0.9
    ADAM_BETA2 = 0.999
    ADAM_EPS = 1e-8
    WEIGHT_DECAY = 0.01
    GRAD_CLIP = 1.0
    DIVERGENCE_FACTOR = 1e3
    DIVERGENCE_PATIENCE = 100


class Cseq:
    """CSEQ1 binary sequence format."""

    MAGIC = b"CSEQ1\x00"
    DTYPE_FLOAT32 = 0
    DTYPE_FLOAT64 = 1
    SUFFIX = ".cseq"


class Checkpoint:
    """Checkpoint binary format."""

    MAGIC = b"TFDCKPT\x00"
    VERSION = 1
    NAME_TEMPLATE = "ckpt_{step}.bin"


class Files:
    """Artifact file names written by the CLI."""

    MANIFEST = "manifest.json"
    MANIFEST_NOTES = "manifest.notes.json"
    METRICS = "metrics.ndjson"
    DATASET_INDEX = "index.json"
    SCHEDULE_DUMP = "schedule.json"


class ExitCode:
    """Process exit codes shared by every subcommand."""

    OK = 0
    VERIFICATION_FAILED = 1
    USAGE = 2
    DIVERGED = 3
