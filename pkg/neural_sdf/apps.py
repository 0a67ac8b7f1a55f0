from django.apps import AppConfig


class NeuralSdfConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'neural_sdf'
