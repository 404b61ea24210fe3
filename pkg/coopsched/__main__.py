import sys

from coopsched.cli import main

sys.exit(main())
