import sys

from django_papsmear.cli import main

sys.exit(main())
