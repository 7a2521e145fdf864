import sys

from ubmot.main import main

sys.exit(main())
