from django.apps import AppConfig


class PullsimConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'pullsim'
    verbose_name = 'Image pull simulator'
