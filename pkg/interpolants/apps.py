from django.apps import AppConfig


class InterpolantsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'interpolants'
    verbose_name = 'Interpolants'
