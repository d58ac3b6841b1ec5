import sys

if __name__ == "__main__":
    from daynight.cli import main

    sys.exit(main())
