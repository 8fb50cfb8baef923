from goalplace.cli.main import main

main()
