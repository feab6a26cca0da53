import sys

from skatekit.cli import main

sys.exit(main())
