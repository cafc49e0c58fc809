from plnmt.cli import main
import sys

sys.exit(main())
