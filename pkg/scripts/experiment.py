from datetime import datetime

import click

from lab.App import EXPERIMENTS
from lab.experiments import run_experiment
from scripts.options import run_options

"""
Run one experiment family and store its CSV tables, images and metadata.
"""


@click.command()
@run_options
@click.argument('name', type=click.Choice(EXPERIMENTS), required=False)
@click.option('--workers', type=click.IntRange(min=1), default=None, help='Worker processes (overrides the config)')
def main(config, name, workers):
    now = datetime.now()
    name = name or config["experiment"]["name"]
    print(f"Start experiment '{name}' with {config['experiment']['seeds']} seed(s)...")

    artifacts = run_experiment(config, name, workers=workers)
    if artifacts.summary is not None and not artifacts.summary.empty:
        print(artifacts.summary.to_string(index=False))
    for key in ("mean_gain_db", "saturation", "q_raised"):
        if key in artifacts.metadata:
            print(f"{key}: {artifacts.metadata[key]}")
    if artifacts.failures:
        print(f"WARNING: {len(artifacts.failures)} point(s) failed, see {artifacts.directory / 'metadata.json'}")

    elapsed = datetime.now() - now
    print(f"Finished experiment '{name}' in {str(elapsed).split('.')[0]}. Output in {artifacts.directory}")


if __name__ == '__main__':
    main()
