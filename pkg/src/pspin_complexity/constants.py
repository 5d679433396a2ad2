"""Model constants shared across modules.

The three p-dependent constants multiply every Hessian/exponent formula in
the pipeline; they are defined once here because mixing them up is the
single most error-prone convention in the build.
"""

from __future__ import annotations

import math
import os

# Master seed for every experiment that does not receive an explicit seed.
# Fixed constant, never wall-clock.  Override via PSPIN_MASTER_SEED.
DEFAULT_MASTER_SEED = 202406
SEED_ENV_VAR = "PSPIN_MASTER_SEED"
THREADS_ENV_VAR = "PSPIN_THREADS"


def master_seed() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return DEFAULT_MASTER_SEED
    return int(raw)


def c1(p: int) -> float:
    """1/sqrt(p(p-1)): scale of the diagonal Hessian profile."""
    return 1.0 / math.sqrt(p * (p - 1))


def c2(p: int) -> float:
    """(p-1)/sqrt(p(p-1)): scale of the V' part of the vector v(sigma)."""
    return (p - 1) / math.sqrt(p * (p - 1))


def c3(p: int) -> float:
    """1/(2 p^2): constant in front of the exponential weight f_N."""
    return 1.0 / (2.0 * p * p)
