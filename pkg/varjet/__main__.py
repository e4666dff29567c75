from varjet.cli import main

raise SystemExit(main())
