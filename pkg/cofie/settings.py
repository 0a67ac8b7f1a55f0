"""
Django settings for the cofie project.

The project has no database and no HTTP surface; Django provides settings,
logging configuration, management commands and the test runner.
"""

from pathlib import Path
from decouple import config, Csv

# Build paths inside the project
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = config('SECRET_KEY', default='cofie-local-only')
DEBUG = config('DEBUG', default=False, cast=bool)
ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    # Third party apps
    'rest_framework',

    # Local apps
    'geom_core',
    'sdf_oracle',
    'coord_field',
    'neural_sdf',
    'trainer',
    'surface_extract',
    'theory_lab',
    'cli',
]

# No database: every test case is a SimpleTestCase and state lives in files
DATABASES = {}

USE_I18N = False
USE_TZ = True
TIME_ZONE = 'UTC'

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# REST Framework is only used for config and report serializers
REST_FRAMEWORK = {
    'UNAUTHENTICATED_USER': None,
    'COERCE_DECIMAL_TO_STRING': False,
}

# Logging
LOG_LEVEL = config('COFIE_LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'loggers': {
        app: {'handlers': ['console'], 'level': LOG_LEVEL, 'propagate': False}
        for app in (
            'geom_core', 'sdf_oracle', 'coord_field', 'neural_sdf',
            'trainer', 'surface_extract', 'theory_lab', 'cli',
        )
    },
}

# Voxel grid
COFIE_GRID = {
    'RESOLUTION': config('COFIE_GRID_RESOLUTION', default=32, cast=int),
    'BOUNDS': tuple(config('COFIE_GRID_BOUNDS', default='-1,-1,-1,1,1,1', cast=Csv(float))),
}

# Per-voxel supervision sampling
COFIE_SAMPLING = {
    'PER_VOXEL': config('COFIE_PER_VOXEL', default=24, cast=int),
    'RADIUS_FACTOR': config('COFIE_RADIUS_FACTOR', default=1.5, cast=float),
    'NEAR_FRACTION': config('COFIE_NEAR_FRACTION', default=0.8, cast=float),
    # Noise scale as a fraction of the cell size
    'SIGMA_CELLS': config('COFIE_SIGMA_CELLS', default=0.25, cast=float),
}

# Shared decoder
COFIE_MODEL = {
    'LATENT_SIZE': config('COFIE_LATENT_SIZE', default=125, cast=int),
    'HIDDEN': config('COFIE_HIDDEN', default=128, cast=int),
    'DEPTH': config('COFIE_DEPTH', default=5, cast=int),
    'QUADRATIC_LAYERS': config('COFIE_QUADRATIC_LAYERS', default=1, cast=int),
}

# Auto-decoder training (desk-scale iteration count)
COFIE_TRAINING = {
    'SHAPES_PER_BATCH': config('COFIE_SHAPES_PER_BATCH', default=12, cast=int),
    'VOXELS_PER_SHAPE': config('COFIE_VOXELS_PER_SHAPE', default=3000, cast=int),
    'POINTS_PER_VOXEL': config('COFIE_POINTS_PER_VOXEL', default=24, cast=int),
    'LR_MLP': config('COFIE_LR_MLP', default=5e-4, cast=float),
    'LR_FRAMES': config('COFIE_LR_FRAMES', default=1e-3, cast=float),
    'LR_LATENTS': config('COFIE_LR_LATENTS', default=1e-3, cast=float),
    'ITERATIONS': config('COFIE_ITERATIONS', default=20000, cast=int),
    'HALVING_PERIOD': config('COFIE_HALVING_PERIOD', default=20000, cast=int),
    'LOG_EVERY': config('COFIE_LOG_EVERY', default=100, cast=int),
}

# Frozen-decoder inference fit
COFIE_INFERENCE = {
    'LR': config('COFIE_INFER_LR', default=5e-4, cast=float),
    'ITERATIONS': config('COFIE_INFER_ITERATIONS', default=800, cast=int),
}

# Extraction and evaluation
COFIE_EXTRACTION = {
    'RESOLUTION': config('COFIE_MC_RESOLUTION', default=128, cast=int),
    'POINTS': config('COFIE_EVAL_POINTS', default=30000, cast=int),
}

# Theory lab
COFIE_LAB = {
    'QUADRATURE_ORDER': config('COFIE_QUADRATURE_ORDER', default=16, cast=int),
    'RADII': tuple(config('COFIE_SWEEP_RADII', default='0.2,0.1,0.05,0.025', cast=Csv(float))),
    'TRIALS': config('COFIE_SWEEP_TRIALS', default=1000, cast=int),
    'CRITICAL_TOLERANCE': config('COFIE_CRITICAL_TOLERANCE', default=1e-8, cast=float),
}
