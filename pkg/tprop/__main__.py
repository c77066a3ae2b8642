"""Allow ``python -m tprop``."""

import sys

from .cli import main

sys.exit(main())
