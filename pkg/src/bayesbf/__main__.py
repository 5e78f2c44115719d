import sys

from bayesbf.cli import main

sys.exit(main())
