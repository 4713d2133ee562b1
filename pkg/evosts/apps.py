from django.apps import AppConfig


class EvoStsConfig(AppConfig):
    name = 'evosts'
    verbose_name = 'EvoSTS Forecasting'
