from django.apps import apps
from django.test import SimpleTestCase

from evosts.apps import EvoStsConfig


class AppConfigTests(SimpleTestCase):
    def test_registered(self):
        config = apps.get_app_config('evosts')
        self.assertIsInstance(config, EvoStsConfig)
        self.assertEqual(config.verbose_name, 'EvoSTS Forecasting')

    def test_has_no_models(self):
        self.assertEqual(list(apps.get_app_config('evosts').get_models()), [])
        self.assertNotIn('default_auto_field', vars(EvoStsConfig))
