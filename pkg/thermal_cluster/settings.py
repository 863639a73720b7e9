"""
Django settings for thermal_cluster project.
"""

from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = config('SECRET_KEY', default='django-insecure-local-simulation-only')

DEBUG = config('DEBUG', default=True, cast=bool)

ALLOWED_HOSTS = []

# Application definition
DJANGO_APPS = [
    'django.contrib.auth',
    'django.contrib.contenttypes',
]

THIRD_PARTY_APPS = [
    'rest_framework',
]

LOCAL_APPS = [
    'cvsim',
]

INSTALLED_APPS = DJANGO_APPS + THIRD_PARTY_APPS + LOCAL_APPS

MIDDLEWARE = []

# Database (run bookkeeping only)
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': config('CVSIM_DB_PATH', default=str(BASE_DIR / 'db.sqlite3')),
    }
}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

# Default primary key field type
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Django REST Framework (serializers and renderers only)
REST_FRAMEWORK = {
    'DEFAULT_RENDERER_CLASSES': [
        'rest_framework.renderers.JSONRenderer',
    ],
    'COERCE_DECIMAL_TO_STRING': False,
}

# Simulation settings
CVSIM_OUTPUT_DIR = config('CVSIM_OUTPUT_DIR', default=str(BASE_DIR / 'output'))
CVSIM_MODE_CAP = config('CVSIM_MODE_CAP', default=64, cast=int)
CVSIM_GRID_N = config('CVSIM_GRID_N', default=256, cast=int)
CVSIM_GRID_L = config('CVSIM_GRID_L', default=8.0, cast=float)
CVSIM_TWO_MODE_GRID_N = config('CVSIM_TWO_MODE_GRID_N', default=32, cast=int)
CVSIM_TWO_MODE_GRID_L = config('CVSIM_TWO_MODE_GRID_L', default=7.0, cast=float)
CVSIM_DEFAULT_SEED = config('CVSIM_DEFAULT_SEED', default=42, cast=int)
CVSIM_TOLERANCE = config('CVSIM_TOLERANCE', default=1e-9, cast=float)
CVSIM_RECORD_RUNS = config('CVSIM_RECORD_RUNS', default=True, cast=bool)
CVSIM_ANCILLA_INTERVAL = config('CVSIM_ANCILLA_INTERVAL', default=2, cast=int)
CVSIM_MC_SAMPLES = config('CVSIM_MC_SAMPLES', default=10000, cast=int)

# Logging
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': config('CVSIM_LOG_LEVEL', default='INFO'),
    },
}
