"""Seed schedule and labelled sub-streams.

Every trial owns one master seed. Subsystems draw from generators keyed by
(master seed, label), so adding a policy or a subsystem never shifts the
random numbers any other component sees.
"""

import zlib

import numpy as np

SEED_BASE = 42
SEED_STRIDE = 100


def trial_seed(trial_index, seed_base=SEED_BASE):
    """Master seed of a trial: ``seed_base + 100 * trial_index``."""
    return int(seed_base) + SEED_STRIDE * int(trial_index)


def label_key(label):
    return zlib.crc32(str(label).encode("utf-8"))


def substream(seed, *labels):
    """Independent generator for ``seed`` and a path of string labels."""
    entropy = [int(seed)] + [label_key(x) for x in labels]
    return np.random.default_rng(np.random.SeedSequence(entropy))
