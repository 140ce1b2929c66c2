from enum import IntEnum

import numpy as np

SEED_MODULUS = 2 ** 32


class Stream(IntEnum):
    """Propósito de cada sequência aleatória; sempre o primeiro termo após a seed."""

    COMBINATIONS = 1
    TRIANGLE_SAMPLE = 2
    RANDOM_PARTNERS = 3
    TERRAIN = 4
    OCCLUDERS = 5
    CLOUD = 6
    MATCH_TRIALS = 7
    MATCH_DRAWS = 8
    RANDOM_ORDER = 9
    ORACLE = 10


def derive_seed(seed: int, stream: Stream, *keys: int) -> list:
    """Sequência de entropia [seed, stream, *keys] aceita por numpy (inteiros não negativos)."""
    return [int(seed) % SEED_MODULUS, int(Stream(stream))] + [int(k) % SEED_MODULUS for k in keys]


def derive_rng(seed: int, stream: Stream, *keys: int) -> np.random.Generator:
    """
    Gerador independente por (seed, propósito, chave...): mesma chave, mesma sequência,
    em qualquer thread. Propósitos distintos nunca compartilham sequência.
    """
    return np.random.default_rng(derive_seed(seed, stream, *keys))
