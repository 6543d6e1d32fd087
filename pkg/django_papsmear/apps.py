from django.apps import AppConfig


class DjangoPapsmearConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'django_papsmear'
    verbose_name = 'Pap Smear Classification'
