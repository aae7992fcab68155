import hashlib
from typing import Dict

import numpy as np

from app.config.constants import SUB_SEED_NAMES


def sub_seed(root_seed: int, name: str) -> int:
    """
    Derive a named stage seed from the root seed.

    Stable across processes and Python versions (no ``hash()``), so a stage can
    be rerun on its own and still draw the same numbers.
    """
    digest = hashlib.sha256(f"{root_seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % (2 ** 32)


def sub_seeds(root_seed: int) -> Dict[str, int]:
    return {name: sub_seed(root_seed, name) for name in SUB_SEED_NAMES}


def rng_for(root_seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(sub_seed(root_seed, name))
