import sys

from trainer_runner.cli import main

sys.exit(main())
