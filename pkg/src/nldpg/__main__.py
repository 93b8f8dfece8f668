import sys

from nldpg.cli import main

sys.exit(main())
