from .xlab.cli import main

raise SystemExit(main())
