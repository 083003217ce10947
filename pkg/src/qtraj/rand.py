"""Random states, unitaries, subspaces and instruments for tests and studies.

All functions take a ``numpy.random.Generator`` (PCG64 via
``np.random.default_rng(seed)`` throughout the package).
"""

from __future__ import annotations

import numpy as np

from qtraj.instrument import Instrument, OutcomeMap
from qtraj.linalg import dag


def ginibre(rng, rows, cols=None):
    cols = rows if cols is None else cols
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)


def haar_unitary(rng, dim):
    q, r = np.linalg.qr(ginibre(rng, dim))
    ph = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * ph


def haar_isometry(rng, rows, cols):
    """``rows x cols`` matrix with orthonormal columns, Haar distributed."""
    q, r = np.linalg.qr(ginibre(rng, rows, cols))
    ph = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * ph


def haar_subspace(rng, dim, k):
    """Orthonormal basis (``dim x k``) of a Haar-random ``k``-dimensional subspace."""
    return haar_isometry(rng, dim, k)


def random_pure_vector(rng, dim):
    v = ginibre(rng, dim, 1)[:, 0]
    return v / np.linalg.norm(v)


def random_pure_state(rng, dim):
    v = random_pure_vector(rng, dim)
    return np.outer(v, v.conj())


def random_state(rng, dim, rank=None):
    """Hilbert-Schmidt random density matrix (of the given rank)."""
    g = ginibre(rng, dim, dim if rank is None else rank)
    rho = g @ dag(g)
    return rho / np.trace(rho).real


def random_full_rank_state(rng, dim, floor=1e-3):
    """Random state mixed with a little identity so it is safely positive definite."""
    rho = random_state(rng, dim)
    return (1 - floor) * rho + floor * np.eye(dim) / dim


def random_psd(rng, dim):
    g = ginibre(rng, dim)
    return g @ dag(g)


def random_kraus_channel(rng, dim, n_kraus):
    """Kraus operators of a random channel: blocks of a Haar isometry ``C^d -> C^(d n)``."""
    w = haar_isometry(rng, dim * n_kraus, dim)
    return w.reshape(n_kraus, dim, dim)


def random_instrument(rng, dim, m, kraus_per_outcome=1) -> Instrument:
    """A random instrument with ``m`` outcomes and ``kraus_per_outcome`` Kraus operators each."""
    ops = random_kraus_channel(rng, dim, m * kraus_per_outcome)
    outcomes = [
        OutcomeMap(kraus=ops[i * kraus_per_outcome:(i + 1) * kraus_per_outcome], label=str(i + 1))
        for i in range(m)
    ]
    return Instrument(outcomes)


def random_cp_map(rng, dim, n_kraus=2, scale=1.0) -> OutcomeMap:
    ops = [scale * ginibre(rng, dim) / np.sqrt(dim * n_kraus) for _ in range(n_kraus)]
    return OutcomeMap(kraus=ops)


def random_word(rng, labels, length):
    return [labels[i] for i in rng.integers(0, len(labels), size=length)]
