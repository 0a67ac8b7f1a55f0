from django.apps import AppConfig


class SdfOracleConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'sdf_oracle'
