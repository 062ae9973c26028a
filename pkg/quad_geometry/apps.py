from django.apps import AppConfig


class QuadGeometryConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'quad_geometry'
    verbose_name = 'Quadrilateral geometry'
