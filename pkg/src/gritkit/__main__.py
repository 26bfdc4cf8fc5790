import sys

from gritkit.cli import main

sys.exit(main())
