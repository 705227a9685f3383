import sys

from qutritks.cli import main

sys.exit(main())
