# Configuration settings for the shelf search simulator

# Shelf Configuration (meters)
SHELF_WIDTH = 0.60
SHELF_DEPTH = 0.40
SHELF_HEIGHT = 0.25

# Blade Configuration (meters)
BLADE_THICKNESS = 0.01
BLADE_ENGAGE_TOLERANCE = 0.005
# Gap kept between the inserted blade and the nearest other surface in its path
BLADE_DEPTH_MARGIN = 0.005

# Scene Generation Configuration
CUBOID_SIDE_RANGE = (0.02, 0.10)
CUBOID_HEIGHT = 0.10
CYLINDER_RADIUS_RANGE = (0.02, 0.05)
CYLINDER_HEIGHT_RANGE = (0.10, 0.20)
CYLINDER_SIDES = 16
CYLINDER_FRACTION = 0.5
TARGET_SIDE = 0.07
TARGET_ASPECT_RATIO = 1.0
GENERATION_RETRY_CAP = 10_000
REQUIRE_FULL_OCCLUSION = True

# Geometry tolerances (meters)
CONTACT_TOLERANCE = 1e-9

# Render Configuration
IMAGE_WIDTH_PX = 256
IMAGE_HEIGHT_PX = 256
DISCONTINUITY_THRESHOLD = 0.02
PGM_MAX_LEVEL = 65535

# Occupancy Oracle Configuration
PLACEMENT_NX = 14
PLACEMENT_NZ = 16
PLACEMENT_NTHETA = 8
PLACEMENT_FULL_ROTATION = False
ENTROPY_NORMALIZE = True

# Rollout Configuration
MAX_STEPS = 10
REVEAL_THRESHOLD = 0.9
TARGET_CONTACT_POLICY = "halt"

# Policy Configuration
POLICY_NAMES = ["uniform", "dar", "der1", "der2", "der3"]
DER_NODE_BUDGET = 20_000

# Benchmark Configuration
BASE_SEED = 0
SCENES_PER_CELL = 200
OCCLUDER_COUNTS = [2, 4, 6, 8]
SCENE_REGENERATION_ATTEMPTS = 5
OUTPUT_DIR = "results"
WORKERS = 1

# Reference success rates / step statistics for display next to reports
REFERENCE_TABLE = {
    2: {"uniform": (0.97, 1.34, 0.56), "dar": (0.98, 1.36, 0.77), "der1": (0.98, 1.36, 0.67),
        "der2": (0.97, 1.80, 0.93), "der3": (0.94, 1.99, 1.19)},
    4: {"uniform": (0.88, 2.27, 1.48), "dar": (0.96, 2.33, 1.78), "der1": (0.92, 2.37, 1.79),
        "der2": (0.92, 2.57, 1.93), "der3": (0.89, 3.21, 2.02)},
    6: {"uniform": (0.71, 2.99, 2.21), "dar": (0.87, 2.79, 2.06), "der1": (0.79, 3.04, 2.30),
        "der2": (0.89, 3.32, 2.14), "der3": (0.85, 3.82, 2.44)},
    8: {"uniform": (0.46, 3.61, 2.75), "dar": (0.66, 3.40, 2.47), "der1": (0.63, 3.13, 2.25),
        "der2": (0.71, 3.94, 2.65), "der3": (0.66, 4.08, 2.54)},
}

# API Configuration
API_TITLE = "Shelf Search Simulator API"
API_VERSION = "1.0.0"
API_HOST = "0.0.0.0"
API_PORT = 8000

# CORS Configuration
CORS_ORIGINS = ["*"]
CORS_ALLOW_CREDENTIALS = True
CORS_ALLOW_METHODS = ["*"]
CORS_ALLOW_HEADERS = ["*"]

# Logging
LOG_LEVEL = "INFO"
