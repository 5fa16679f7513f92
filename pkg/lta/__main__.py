from lta.cli import main

main()
