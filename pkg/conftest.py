"""
Pytest wiring for the Django test suite.

Mirrors what ``python manage.py test`` does: point at the project settings,
set up the test environment and create a throwaway test database for the
session.
"""

import os

import django


def pytest_configure(config):
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'di4c_lab.settings')
    django.setup()
    from django.test.utils import setup_databases, setup_test_environment

    setup_test_environment()
    config._django_db_config = setup_databases(verbosity=0, interactive=False)


def pytest_unconfigure(config):
    from django.test.utils import teardown_databases, teardown_test_environment

    old_config = getattr(config, '_django_db_config', None)
    if old_config is not None:
        teardown_databases(old_config, verbosity=0)
        teardown_test_environment()
