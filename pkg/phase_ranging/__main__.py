from phase_ranging.cli import main

main()
