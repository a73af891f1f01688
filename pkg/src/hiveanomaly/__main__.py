from .clio.cli import main

raise SystemExit(main())
