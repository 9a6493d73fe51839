"""
Options shared by all commands and the config preparation they trigger.
"""
from functools import wraps
import logging

import click

from lab.App import App, load_config, normalize_config


def run_options(func):
    """--config/-c, --seed, --out, --threads, --no-noise, --log-level"""
    @click.option('--config', '-c', 'config_file', type=click.Path(), default='', help='Configuration file name')
    @click.option('--seed', type=click.IntRange(min=0), default=None, help='Base seed (overrides the config)')
    @click.option('--out', 'out_dir', type=click.Path(), default=None, help='Output folder (overrides the config)')
    @click.option('--threads', type=click.IntRange(min=0), default=None, help='Numba threads for echo synthesis')
    @click.option('--no-noise', is_flag=True, default=False, help='Synthesize echoes without noise')
    @click.option('--log-level', type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR']), default='WARNING')
    @wraps(func)
    def wrapper(config_file, seed, out_dir, threads, no_noise, log_level, **kwargs):
        logging.basicConfig(level=log_level, format='%(asctime)s %(name)s %(levelname)s %(message)s')
        config = prepare_config(config_file, seed=seed, out_dir=out_dir, threads=threads, noise=not no_noise if no_noise else None)
        return func(config, **kwargs)
    return wrapper


def prepare_config(config_file, seed=None, out_dir=None, threads=None, noise=None) -> dict:
    """Load the configuration and apply command line overrides. Numba threads are set here."""
    config = load_config(config_file)
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if out_dir is not None:
        overrides["out_dir"] = str(out_dir)
    if threads is not None:
        overrides["threads"] = threads
    if noise is not None:
        overrides["echo"] = {**config["echo"], "noise": noise}
    if overrides:
        config = normalize_config({**config, **overrides})
        App.config = config

    if config["threads"]:
        import numba
        numba.set_num_threads(config["threads"])
    return config
