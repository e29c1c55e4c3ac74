import sys

from codps.cli import main

sys.exit(main())
