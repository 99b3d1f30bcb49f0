import sys

from stackrl.cli import main

sys.exit(main())
