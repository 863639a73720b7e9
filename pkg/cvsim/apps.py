from django.apps import AppConfig


class CvsimConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'cvsim'
    verbose_name = 'Thermal cluster simulation'
