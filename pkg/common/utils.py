import hashlib
import json
from enum import IntEnum
from typing import Union

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s


#
# Random streams
#

class Stream(IntEnum):
    """Identifiers of independent random streams. Each (seed, stream, slot) triple gets its own generator."""
    SR = 0  # radar -> ARIS NLoS draw
    RT = 1  # ARIS -> grid NLoS draw
    NOISE = 2  # receiver and ARIS noise samples
    INIT = 3  # optimizer initial phases
    RANDOM_BASELINE = 4  # random PRIS phases


def rng_stream(seed: int, stream: int, n: int = 0) -> np.random.Generator:
    """
    Counter-based generator for one (seed, stream, slot) triple.

    Philox is keyed by the seed sequence so that generators for different slots can be created
    in any order and in any process and still produce identical numbers.
    """
    ss = np.random.SeedSequence([int(seed), int(stream), int(n)])
    return np.random.Generator(np.random.Philox(ss))


def complex_normal(rng: np.random.Generator, size, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples CN(0, variance)."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


#
# Units
#

def db_to_linear(db: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(value: Union[float, np.ndarray], floor: float = 1e-300) -> Union[float, np.ndarray]:
    return 10.0 * np.log10(np.maximum(np.asarray(value, dtype=float), floor))


def dbm_to_watts(dbm: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """-80 dBm -> 1e-11 W"""
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


#
# Provenance
#

def params_hash(obj) -> str:
    """
    Git-style short hash of a JSON-serializable object. Keys are sorted so that equal configurations
    produce equal hashes independent of the key order in the source file.
    """
    text = json.dumps(obj, sort_keys=True, default=json_default, separators=(",", ":"))
    return hashlib.sha1(text.encode("utf-8")).hexdigest()[:12]


def json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, complex):
        return [value.real, value.imag]
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


if __name__ == "__main__":
    pass
