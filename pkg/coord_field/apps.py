from django.apps import AppConfig


class CoordFieldConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'coord_field'
