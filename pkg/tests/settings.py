SECRET_KEY = 'evosts-tests'

INSTALLED_APPS = ['evosts']

DATABASES = {}

USE_TZ = True

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'APP_DIRS': True,
    },
]

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'loggers': {
        'evosts': {'level': 'WARNING'},
    },
}
