import sys

from satim.lab.cli import main

sys.exit(main())
