import sys

from driftflow.cli import main

sys.exit(main())
