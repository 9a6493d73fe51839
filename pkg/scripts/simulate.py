from datetime import datetime
from pathlib import Path

import click

from common.echo_synth import dump_raw
from lab.artifacts import run_metadata, write_float32, write_json, write_pgm
from lab.experiments import image_point
from common.utils import params_hash
from scripts.options import run_options

"""
Synthesize the raw echo of the configured scene, focus it and store the image with its quality metrics.
"""


@click.command()
@run_options
@click.option('--surface', type=click.Choice(['aris', 'pris']), default='aris', help='Surface variant')
@click.option('--a-max', 'a_max', type=float, default=None, help='ARIS amplitude cap (overrides the config)')
@click.option('--dump-raw/--no-dump-raw', 'raw', default=False, help='Also store the raw echo matrix (complex64)')
def main(config, surface, a_max, raw):
    now = datetime.now()
    out = Path(config["out_dir"]) / "simulate"
    seed = config["seed"]

    print(f"Simulating scene '{config['scene']['pattern']}' with {surface.upper()}, seed {seed}...")
    result = image_point(config, seed, surface, a_max=a_max, keep_echo=raw)

    name = f"image_{surface}_seed{seed}"
    write_pgm(result["magnitude"], out / f"{name}.pgm")
    write_float32(result["magnitude"], out / f"{name}.f32", seed=seed, variant=surface)
    if "echo" in result:
        sidecar = dump_raw(result["echo"], out / f"raw_{surface}_seed{seed}.c64")
        print(f"Raw echo stored with sidecar {sidecar}")

    metrics = result["metrics"]
    write_json(run_metadata(config, params_hash(config), command="simulate", metrics=metrics), out / f"metrics_{surface}_seed{seed}.json")

    print(f"NCC vs truth {metrics['ncc_vs_truth']:.4f}, PSLR {metrics['pslr_db']:.2f} dB, "
          f"range width {metrics['range_width_m']:.3f} m, entropy {metrics['entropy']:.3f}")
    elapsed = datetime.now() - now
    print(f"Finished simulation in {str(elapsed).split('.')[0]}. Output in {out}")


if __name__ == '__main__':
    main()
