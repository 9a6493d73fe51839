"""
Artifact writers. Every file is written to a temporary name in the target folder and then renamed,
so a reader never sees a partially written artifact.
"""
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Union
import json
import os
import platform

import numpy as np
import pandas as pd

from common.utils import json_default
from lab.App import App

PathLike = Union[str, Path]


@contextmanager
def atomic_path(path: PathLike):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def write_table(df: pd.DataFrame, path: PathLike) -> Path:
    """CSV (UTF-8, header row) or parquet, chosen by the suffix."""
    path = Path(path)
    with atomic_path(path) as tmp:
        if path.suffix == ".parquet":
            df.to_parquet(tmp, index=False)
        elif path.suffix == ".csv":
            df.to_csv(tmp, index=False, encoding="utf-8", lineterminator="\n")
        else:
            raise ValueError(f"Unknown table extension '{path.suffix}'. Only 'csv' and 'parquet' are supported")
    return path


def read_table(path: PathLike) -> pd.DataFrame:
    path = Path(path)
    if path.suffix == ".parquet":
        return pd.read_parquet(path)
    return pd.read_csv(path)


def to_gray8(magnitude: np.ndarray) -> np.ndarray:
    """Min-max scaling to 0..255. A constant image maps to zeros."""
    magnitude = np.asarray(magnitude, dtype=float)
    lo, hi = float(magnitude.min()), float(magnitude.max())
    if hi <= lo:
        return np.zeros(magnitude.shape, dtype=np.uint8)
    return np.round((magnitude - lo) / (hi - lo) * 255.0).astype(np.uint8)


def write_pgm(magnitude: np.ndarray, path: PathLike) -> Path:
    """Binary 8-bit PGM (P5), rows are slow time."""
    gray = to_gray8(magnitude)
    rows, cols = gray.shape
    with atomic_path(path) as tmp:
        with open(tmp, "wb") as f:
            f.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
            f.write(gray.tobytes())
    return Path(path)


def write_float32(matrix: np.ndarray, path: PathLike, **info) -> Path:
    """Little-endian float32 row-major matrix with a JSON sidecar describing its shape."""
    path = Path(path)
    matrix = np.asarray(matrix)
    with atomic_path(path) as tmp:
        matrix.astype("<f4").tofile(tmp)
    sidecar = dict(rows=matrix.shape[0], cols=matrix.shape[1], dtype="float32", byteorder="little",
                   order="row-major", **info)
    write_json(sidecar, path.with_suffix(".json"))
    return path


def write_json(obj: dict, path: PathLike) -> Path:
    with atomic_path(path) as tmp:
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(obj, f, indent=2, sort_keys=True, default=json_default)
            f.write("\n")
    return Path(path)


def package_versions() -> dict:
    import numba
    import scipy
    return dict(
        python=platform.python_version(), numpy=np.__version__, pandas=pd.__version__,
        scipy=scipy.__version__, numba=numba.__version__,
    )


def run_metadata(config: dict, config_hash: str, **extra) -> dict:
    """
    Provenance record: enough to re-run the artifact set. The resolved configuration is stored together with
    the raw text of the file it was loaded from, if any.
    """
    return dict(
        config=config,
        config_file=App.config_file,
        config_text=App.config_text,
        seed=config.get("seed"),
        params_hash=config_hash,
        versions=package_versions(),
        created=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        **extra,
    )
