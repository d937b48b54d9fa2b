import sys

from bell_lab.cli import main

sys.exit(main())
