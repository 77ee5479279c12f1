import sys

from ramsey_noise.cli import main

sys.exit(main())
