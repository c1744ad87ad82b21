import sys

from dmqkd.cli import main

sys.exit(main())
