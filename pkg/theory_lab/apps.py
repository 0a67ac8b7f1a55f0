from django.apps import AppConfig


class TheoryLabConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'theory_lab'
