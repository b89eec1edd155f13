"""Named, independent random streams derived from one master seed.

Each consumer asks for a stream by label, so adding a new consumer never
shifts the draws of an existing one.
"""
from __future__ import annotations

import zlib

import numpy as np

INITIAL_ENSEMBLE = "initial-ensemble"
OMEGA_SAMPLE = "omega-sample"
TRAIN_SET = "train-set"
TEST_SET = "test-set"
MARGINAL_U = "marginalization-u"
MARGINAL_UPRIME = "marginalization-uprime"
MFL_SAMPLE = "mfl-sample"
COMPETITORS = "competitors"
REFERENCE_CLOUD = "reference-cloud"
SUBSAMPLE = "subsample"


def _label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def stream(seed: int, label: str, *index: int) -> np.random.Generator:
    """Counter-based (Philox) generator for ``(seed, label, *index)``."""
    seq = np.random.SeedSequence(int(seed), spawn_key=(_label_key(label), *map(int, index)))
    return np.random.Generator(np.random.Philox(seq))
