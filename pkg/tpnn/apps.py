from django.apps import AppConfig


class TpnnConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'tpnn'
    verbose_name = 'Bayesian-TPNN'
