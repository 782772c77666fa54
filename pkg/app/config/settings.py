"""Application settings and environment variables."""
import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Grid defaults
GRID_DIMENSION = int(os.getenv("GRID_DIMENSION", "2"))
GRID_SIZE = int(os.getenv("GRID_SIZE", "64"))
GRID_HALF_WIDTH = float(os.getenv("GRID_HALF_WIDTH", "6.0"))

# Direction sampling
DIRECTIONS_2D = int(os.getenv("DIRECTIONS_2D", "180"))
DIRECTIONS_3D = int(os.getenv("DIRECTIONS_3D", "500"))
TANGENTS_3D = int(os.getenv("TANGENTS_3D", "32"))

# Numerics
PHANTOM_MASS_TOLERANCE = float(os.getenv("PHANTOM_MASS_TOLERANCE", "1e-8"))
SPECTRAL_OVERSAMPLE = int(os.getenv("SPECTRAL_OVERSAMPLE", "8"))
MAX_SPECTRAL_NODES = int(os.getenv("MAX_SPECTRAL_NODES", str(2 ** 21)))
RADON_INTERP_ORDER = int(os.getenv("RADON_INTERP_ORDER", "3"))
P_PADDING = int(os.getenv("P_PADDING", "2"))
GRIDDING_OVERSAMPLE = int(os.getenv("GRIDDING_OVERSAMPLE", "2"))

# Tolerances
RADON_IMAG_TOLERANCE = float(os.getenv("RADON_IMAG_TOLERANCE", "1e-3"))
DELTA_D_RANGE_TOLERANCE = float(os.getenv("DELTA_D_RANGE_TOLERANCE", "1e-6"))
INVERSION_RANGE_TOLERANCE = float(os.getenv("INVERSION_RANGE_TOLERANCE", "0.5"))
DECOMPOSITION_TOLERANCE = float(os.getenv("DECOMPOSITION_TOLERANCE", "1e-6"))
RANGE_THRESHOLD = float(os.getenv("RANGE_THRESHOLD", "1e-3"))
RANGE_K_MAX = int(os.getenv("RANGE_K_MAX", "4"))
UCP_RATIO_THRESHOLD = float(os.getenv("UCP_RATIO_THRESHOLD", "5e-2"))
UCP_EXTERIOR_FLOOR = float(os.getenv("UCP_EXTERIOR_FLOOR", "1e-3"))
UCP_MARGIN_THRESHOLD = float(os.getenv("UCP_MARGIN_THRESHOLD", "1e-3"))
KERNEL_THRESHOLD = float(os.getenv("KERNEL_THRESHOLD", "1e-3"))
SLICE_THRESHOLD = float(os.getenv("SLICE_THRESHOLD", "1e-3"))
IDENTITY_THRESHOLD = float(os.getenv("IDENTITY_THRESHOLD", "1e-3"))
RESHETNYAK_THRESHOLD = float(os.getenv("RESHETNYAK_THRESHOLD", "3e-2"))
INVERSION_THRESHOLD = float(os.getenv("INVERSION_THRESHOLD", "5e-2"))

# Run settings
OUTPUT_DIR = os.getenv("OUTPUT_DIR", "runs")
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
DEFAULT_SEED = int(os.getenv("DEFAULT_SEED", "20240611"))
LOG_BATCH_SIZE = int(os.getenv("LOG_BATCH_SIZE", "20"))

# Parallelism cap for row/coefficient work
TENSOR_RADON_THREADS = int(os.getenv("TENSOR_RADON_THREADS", str(os.cpu_count() or 1)))
