"""Allow ``python -m bcgp``."""

import sys

from .main import main

sys.exit(main())
