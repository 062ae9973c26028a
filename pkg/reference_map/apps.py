from django.apps import AppConfig


class ReferenceMapConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'reference_map'
    verbose_name = 'Reference map'
