"""
Django settings for the Bayesian-TPNN project.

The project has no database and no web surface; Django provides settings,
logging configuration and the management-command CLI (``python manage.py
fit ...``).
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# Use environment variable for SECRET_KEY with fallback
SECRET_KEY = os.environ.get(
    'SECRET_KEY',
    'tpnn-insecure-local-key-not-used-for-signing'
)

# Use environment variable for DEBUG with fallback
DEBUG = os.environ.get('DEBUG', 'False').lower() == 'true'

ALLOWED_HOSTS: list[str] = []


# Application definition

INSTALLED_APPS = [
    'tpnn',
]

DATABASES: dict = {}

USE_TZ = True
TIME_ZONE = 'UTC'

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Sampler runtime knobs

# Threads used to run independent chains side by side
TPNN_WORKERS = int(os.environ.get('TPNN_WORKERS', '1'))

# Iterations between chain progress log lines
TPNN_LOG_EVERY = int(os.environ.get('TPNN_LOG_EVERY', '100'))

# Predictive draws used by the CRPS estimator
TPNN_CRPS_DRAWS = int(os.environ.get('TPNN_CRPS_DRAWS', '1000'))


# Logging

TPNN_LOG_LEVEL = os.environ.get('TPNN_LOG_LEVEL', 'INFO').upper()

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
        'tpnn': {
            'handlers': ['console'],
            'level': TPNN_LOG_LEVEL,
            'propagate': False,
        },
    },
}
