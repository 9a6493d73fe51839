import click

from scripts import experiment, optimize, simulate, sweep

"""
Single entry point: python -m scripts.cli <simulate|optimize|sweep|experiment> [options]
"""


@click.group()
def cli():
    pass


cli.add_command(simulate.main, name="simulate")
cli.add_command(optimize.main, name="optimize")
cli.add_command(sweep.main, name="sweep")
cli.add_command(experiment.main, name="experiment")


if __name__ == '__main__':
    cli()
