"""Named, counter-based random substreams.

Every stochastic component draws from its own substream, keyed by a string
label and a 64-bit user seed.  Streams are backed by Philox (counter-based),
so component-level reproducibility survives refactoring: adding draws to one
component never shifts the values seen by another.

Documented stream labels used across the package:

==============  =================================================
label           used for
==============  =================================================
ground-truth    planted factor / eigenbasis sampling
ensemble        Gaussian sensing matrices
label-noise     optional additive label noise
init            Haar initialization basis of the solvers
sgd             per-step batch indices of stochastic runs
rip-probes      random low-rank probes of the RIP estimator
quad-data       Gaussian inputs of the quadratic-network dataset
==============  =================================================
"""

from __future__ import annotations

import hashlib

import numpy as np


def substream(seed: int, label: str) -> np.random.Generator:
    """Return an independent Philox generator for (seed, label).

    The label is hashed (SHA-256) into the SeedSequence spawn key, so the
    mapping is stable across processes and Python versions.
    """
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    spawn_key = tuple(
        int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)
    )
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(ss))
