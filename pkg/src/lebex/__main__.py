import sys

from .repro_cli import main

sys.exit(main())
