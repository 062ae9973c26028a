from django.apps import AppConfig


class NormsQuadratureConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'norms_quadrature'
    verbose_name = 'Norms and quadrature'
