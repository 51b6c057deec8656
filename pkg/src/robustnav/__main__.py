import sys

from robustnav.cli import main

sys.exit(main())
