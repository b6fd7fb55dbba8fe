import zlib

import numpy as np


def derive_seed(root: int, component: str, purpose: str = "", index: int = 0) -> int:
    """
    Derives an independent 32-bit seed from the root seed and a name.
    Names are hashed with crc32 because the builtin `hash` is salted per process.
    """
    sequence = np.random.SeedSequence(
        [root & 0xFFFFFFFF, zlib.crc32(component.encode("utf-8")), zlib.crc32(purpose.encode("utf-8")), index]
    )
    return int(sequence.generate_state(1)[0])


def make_rng(root: int, component: str, purpose: str = "", index: int = 0) -> np.random.Generator:
    """Generator for one named random stream."""
    return np.random.default_rng(derive_seed(root, component, purpose, index))


def format_float(value: float) -> str:
    """17 significant digits: parses back to the identical double."""
    return f"{value:.17g}"


def format_row(values: np.ndarray) -> str:
    return " ".join(format_float(float(v)) for v in values)
