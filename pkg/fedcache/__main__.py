import sys

from fedcache.main_cli import main

sys.exit(main())
