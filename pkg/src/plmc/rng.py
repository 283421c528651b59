"""Counter-based random streams.

Every draw is a pure function of (seed, stream, step, chain, index): the
tuple is pushed through a splitmix64-style avalanche hash and the resulting
uniform is mapped through the standard normal quantile function. Nothing
depends on evaluation order, so any partitioning of chains across workers
reproduces the same noise bit for bit.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_MASK = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_ONE = np.uint64(1)

# Stream tags. LANGEVIN is the stream behind normal_stream().
LANGEVIN = 0
INIT = 1
MALA_PROPOSAL = 2
MALA_ACCEPT = 3
ANCESTRAL = 4


def _mix(z):
    # uint64 arithmetic is meant to wrap
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _absorb(state, word):
    with np.errstate(over="ignore"):
        return _mix(state ^ (word * _GOLDEN + _ONE))


def _word(value) -> np.uint64:
    return np.uint64(int(value) & _MASK)


def _root(seed, stream: int):
    with np.errstate(over="ignore"):
        return _absorb(_mix(_word(seed) + _GOLDEN), _word(stream))


def _uniform(h):
    # 53 significant bits, strictly inside (0, 1)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def normal_block(seed, step, n_chains, n_dims, stream=LANGEVIN,
                 first_chain=0, first_dim=0):
    """Standard normal draws for a rectangle of (chain, dim) counters.

    Returns an (n_chains, n_dims) array whose (c, j) entry depends only on
    (seed, stream, step, first_chain + c, first_dim + j).
    """
    h = _absorb(_root(seed, stream), _word(step))
    chains = np.arange(first_chain, first_chain + n_chains, dtype=np.uint64)
    dims = np.arange(first_dim, first_dim + n_dims, dtype=np.uint64)
    h = _absorb(h, chains[:, None])
    h = _absorb(h, dims[None, :])
    return ndtri(_uniform(h))


def uniform_block(seed, step, n_chains, stream, first_chain=0):
    """One uniform in (0, 1) per chain, same determinism contract."""
    h = _absorb(_root(seed, stream), _word(step))
    chains = np.arange(first_chain, first_chain + n_chains, dtype=np.uint64)
    h = _absorb(h, chains)
    h = _absorb(h, np.uint64(0))
    return _uniform(h)


def normal_stream(seed, chain_id, step, dim_index) -> float:
    """Deterministic standard normal for one (seed, chain, step, dim) tuple.

    This is exactly the noise the Langevin sampler feeds chain ``chain_id``
    at step ``step`` in coordinate ``dim_index``.
    """
    block = normal_block(seed, step, 1, 1, stream=LANGEVIN,
                         first_chain=chain_id, first_dim=dim_index)
    return float(block[0, 0])
