import sys

from .clidata.cli import main

sys.exit(main())
