from django.conf import settings
from django.core.exceptions import ImproperlyConfigured


def quadlab_setting(name):
    """Read a numerical setting from settings.QUADLAB"""
    try:
        return settings.QUADLAB[name]
    except (AttributeError, KeyError):
        raise ImproperlyConfigured(f'QUADLAB setting {name!r} is not configured')
