from django.apps import AppConfig


class GeomCoreConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'geom_core'
