"""
Django settings for quadlab project.

quadlab has no database, views or URLs; Django provides settings,
logging configuration and the management-command front door.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

from pathlib import Path

from decouple import Csv, config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = config('SECRET_KEY', default='django-insecure-quadlab-local-only')

DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = config('ALLOWED_HOSTS', default='localhost,127.0.0.1', cast=Csv())


# Application definition

INSTALLED_APPS = [
    'core',
    'quad_geometry',
    'reference_map',
    'interpolants',
    'norms_quadrature',
    'experiments',
    'cli',
]

DATABASES = {}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

USE_TZ = True


# Numerical tolerances

QUADLAB = {
    'CONVEXITY_RTOL': config('QUADLAB_CONVEXITY_RTOL', default=1e-12, cast=float),
    'CONDITION_RTOL': config('QUADLAB_CONDITION_RTOL', default=1e-9, cast=float),
    'QUADRATURE_RTOL': config('QUADLAB_QUADRATURE_RTOL', default=1e-8, cast=float),
    'QUADRATURE_EXTRA_ORDER': config('QUADLAB_QUADRATURE_EXTRA_ORDER', default=6, cast=int),
    'REFINEMENT_STEP': config('QUADLAB_REFINEMENT_STEP', default=4, cast=int),
    'GRADING_EXTRA_LEVELS': config('QUADLAB_GRADING_EXTRA_LEVELS', default=2, cast=int),
    'NEWTON_MAX_ITER': config('QUADLAB_NEWTON_MAX_ITER', default=50, cast=int),
    'FLAG_CONSTANT': config('QUADLAB_FLAG_CONSTANT', default=4.0, cast=float),
    'RATE_WINDOW': config('QUADLAB_RATE_WINDOW', default=4, cast=int),
    'RESIDUAL_LIMIT': config('QUADLAB_RESIDUAL_LIMIT', default=0.05, cast=float),
}


# Logging

LOG_DIR = Path(config('QUADLAB_LOG_DIR', default=str(BASE_DIR / 'logs')))
LOG_DIR.mkdir(parents=True, exist_ok=True)

LOG_LEVEL = config('QUADLAB_LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'file': {
            'level': LOG_LEVEL,
            'class': 'logging.FileHandler',
            'filename': LOG_DIR / 'quadlab.log',
            'formatter': 'verbose',
        },
        'console': {
            'level': 'WARNING',
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'root': {
        'handlers': ['console', 'file'],
        'level': 'WARNING',
    },
    'loggers': {
        'django': {
            'handlers': ['console', 'file'],
            'level': 'WARNING',
            'propagate': False,
        },
        **{
            name: {
                'handlers': ['console', 'file'],
                'level': LOG_LEVEL,
                'propagate': False,
            }
            for name in (
                'quadlab',
                'core',
                'quad_geometry',
                'reference_map',
                'interpolants',
                'norms_quadrature',
                'experiments',
                'cli',
            )
        },
    },
}
