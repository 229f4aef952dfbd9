import sys

from eclat.cli import main

sys.exit(main())
