import sys

from mlfrac.cli import main

sys.exit(main())
