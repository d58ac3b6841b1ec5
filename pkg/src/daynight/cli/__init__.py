from daynight.cli.execute import main as execute_main


def main():
    execute_main()
