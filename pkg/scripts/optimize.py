from dataclasses import replace
from datetime import datetime
from pathlib import Path

import click
import pandas as pd
from tqdm import tqdm

from common.utils import linear_to_db, params_hash
from common.channel import sample_channel_slot
from common.aris_opt import SnrModel, aris_power, compute_snr, optimize_slot, pris_baseline, trace_frame
from lab.App import aris_options, channel_params, radar_params, scenario_geometry
from lab.artifacts import run_metadata, write_json, write_table
from lab.experiments import slot_indexes
from scripts.options import run_options

"""
Optimize the ARIS reflection vector slot by slot and store the per-slot SNR table and the optimizer traces.
"""


@click.command()
@run_options
@click.option('--slot', 'slots', type=int, multiple=True, help='Slot index (repeatable). Default: every slot_stride-th slot')
@click.option('--format', 'fmt', type=click.Choice(['csv', 'parquet']), default='csv', help='Table format')
def main(config, slots, fmt):
    now = datetime.now()
    out = Path(config["out_dir"]) / "optimize"
    seed = config["seed"]

    params = radar_params(config)
    geom = scenario_geometry(config, params)
    channel = channel_params(config, seed)
    options = aris_options(config, seed)
    P_aris, a_max = config["aris"]["P_aris"], config["aris"]["a_max"]
    slots = list(slots) or slot_indexes(params.N, config["experiment"]["slot_stride"])

    print(f"Optimizing {len(slots)} slots with M={channel.M}, P_aris={P_aris} W, a_max={a_max}...")
    rows = []
    traces = []
    for n in tqdm(slots, desc="SLOTS"):
        slot = sample_channel_slot(channel, geom, n, seed=seed)
        model = SnrModel.from_slot(slot, params.P_s)
        phi, trace = optimize_slot(model, P_aris, a_max, replace(options, slot=n))
        phi_pris, model_pris = pris_baseline(model, params.P_s + P_aris)
        rows.append(dict(
            slot=n, snr_aris_db=float(linear_to_db(compute_snr(phi, model))),
            snr_pris_db=float(linear_to_db(compute_snr(phi_pris, model_pris))),
            power_w=aris_power(phi, model), outer_iterations=len(trace.l_history), converged=trace.converged,
        ))
        df = trace_frame(trace)
        df.insert(0, "slot", n)
        traces.append(df)

    write_table(pd.DataFrame(rows), out / f"snr.{fmt}")
    write_table(pd.concat(traces, ignore_index=True), out / f"traces.{fmt}")
    write_json(run_metadata(config, params_hash(config), command="optimize", slots=slots), out / "metadata.json")

    elapsed = datetime.now() - now
    print(f"Finished optimization in {str(elapsed).split('.')[0]}. Output in {out}")


if __name__ == '__main__':
    main()
