"""Light-source-transfer engine configuration."""

# ========================================
# OPTIMIZER SETTINGS
# ========================================

# Adam defaults (beta1 is the "momentum of 0.5" of the training recipe)
LEARNING_RATE = 2e-4
ADAM_BETA1 = 0.5
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

# Weight initialization: Gaussian(0, INIT_STD), biases zero
INIT_STD = 0.02

# ========================================
# ARCHITECTURE SETTINGS
# ========================================

BASE_CHANNELS = 32             # C0 of the full-size model
TEST_BASE_CHANNELS = 8         # desk-scale preset
ENCODER_STAGES = 4             # DFSB/UFSB pairs, each a factor-2 scale step
RESIDUAL_BLOCKS = 9            # bottleneck depth
MS_CHANNELS = 32               # multi-scale branch width
RERENDER_KERNELS = (3, 7, 13, 19, 25)
RERENDER_BRANCH_CHANNELS = 16
RECALIBRATION_REDUCTION = 4
DISC_CHANNELS = 64             # first discriminator layer width
DISC_MIN_SIZE = 16             # receptive-field minimum of the patch critic
LEAKY_SLOPE = 0.2
NORM_EPS = 1e-5

NORMALIZATIONS = ("instance", "none")
ACTIVATIONS = ("relu", "leaky_relu", "tanh", "sigmoid")

# ========================================
# LOSS SETTINGS
# ========================================

W_RECON_SCENE = 1.0
W_RECON_SHADOW = 1.0
W_RECON_FINAL = 1.0
W_ADV_SCENE = 0.01
W_ADV_SHADOW = 0.01

# Shadow rectification threshold z = min(x, y), x = 15/255
SHADOW_THRESHOLD = 15 / 255

# ========================================
# SYNTHETIC CORPUS SETTINGS
# ========================================

DIRECTIONS = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")
TEMPERATURES = (2500, 3500, 4500, 5500, 6500)

# Fixed competition target: light from the east at 4500 K
TARGET_DIRECTION = "E"
TARGET_TEMPERATURE = 4500
NEUTRAL_TEMPERATURE = 4500

# RGB multipliers per color temperature (blue/red ratio strictly increasing)
TEMPERATURE_GAINS = {
    2500: (1.00, 0.65, 0.36),
    3500: (1.00, 0.79, 0.57),
    4500: (1.00, 0.89, 0.77),
    5500: (1.00, 0.97, 0.94),
    6500: (0.95, 0.97, 1.00),
}

LIGHT_ELEVATION_DEG = 35.0
AMBIENT = 0.25

MIN_OBJECTS = 2
MAX_OBJECTS = 6
MIN_RESOLUTION = 32
MAX_RESOLUTION = 256

# Seed ranges per split never overlap
SPLIT_SEED_BASES = {
    "train": 0,
    "val": 1 << 40,
    "test": 1 << 41,
}
SEEDS_PER_RUN = 100_000
# Largest run seed whose range stays below the next split base
MAX_RUN_SEED = (1 << 40) // SEEDS_PER_RUN - 1

# ========================================
# DESK-SCALE TRAINING PRESET
# ========================================

DEFAULT_STEPS = 500
DEFAULT_BATCH_SIZE = 2
DEFAULT_RESOLUTION = 64
DEFAULT_RESIZE_FACTOR = 0.5    # corpus renders are downscaled by this factor
DEFAULT_SEED = 7
DEFAULT_CHECKPOINT_INTERVAL = 100
DEFAULT_LOG_EVERY = 10

# ========================================
# FILE NAMES
# ========================================

MANIFEST_NAME = "manifest.tsv"
SHADOW_FREE_NAME = "shadow_free.png"
LOSS_LOG_NAME = "loss_log.tsv"
RUN_LOG_NAME = "train.log"
CHECKPOINT_PATTERN = "checkpoint_{step:06d}.mcnw"
FINAL_CHECKPOINT_NAME = "final.mcnw"
METRICS_TEXT_NAME = "metrics.txt"
METRICS_JSON_NAME = "metrics.json"
ABLATION_TEXT_NAME = "ablation.txt"
ABLATION_JSON_NAME = "ablation.json"

# Checkpoint container
CHECKPOINT_MAGIC = b"MCNW"
CHECKPOINT_VERSION = 1
# Step counters are stored as float32, exact up to 2**24
MAX_STEPS = 1 << 24
