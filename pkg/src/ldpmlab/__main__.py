import sys

from .workbench_cli import main

sys.exit(main())
