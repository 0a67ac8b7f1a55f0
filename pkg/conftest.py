import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'cofie.settings')
django.setup()
