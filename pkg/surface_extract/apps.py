from django.apps import AppConfig


class SurfaceExtractConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'surface_extract'
