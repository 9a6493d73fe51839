from datetime import datetime

import click

from lab.experiments import run_experiment
from scripts.options import run_options

"""
Run one parameter sweep. Every swept value is combined with all configured seeds.
"""

SWEEPS = {
    "elements": "snr-vs-elements",
    "powers": "snr-vs-power",
    "velocities": "velocity-sweep",
}


@click.command()
@run_options
@click.argument('parameter', type=click.Choice(list(SWEEPS)))
@click.option('--workers', type=click.IntRange(min=1), default=None, help='Worker processes (overrides the config)')
def main(config, parameter, workers):
    now = datetime.now()
    name = SWEEPS[parameter]
    print(f"Sweeping '{parameter}' over {config['experiment'][parameter]}...")

    artifacts = run_experiment(config, name, workers=workers)
    if artifacts.summary is not None and not artifacts.summary.empty:
        print(artifacts.summary.to_string(index=False))
    if artifacts.failures:
        print(f"WARNING: {len(artifacts.failures)} sweep point(s) failed, see {artifacts.directory / 'metadata.json'}")

    elapsed = datetime.now() - now
    print(f"Finished sweep in {str(elapsed).split('.')[0]}. Output in {artifacts.directory}")


if __name__ == '__main__':
    main()
