import sys

from zonoconform.cli import main

sys.exit(main())
