"""Named instruments used by the tests, scripts and the CLI."""

from __future__ import annotations

import numpy as np

from qtraj.instrument import Instrument, OutcomeMap, build_imperfect

BIAS_09 = np.array([[0.9, 0.1], [0.1, 0.9]])


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=complex)


def biased_qubit_ops(theta: float = 0.0, p: float = 0.7):
    """Perfect operators ``R(theta) diag(sqrt p, sqrt(1-p))`` and its mirror."""
    r = rotation(theta)
    v1 = r @ np.diag([np.sqrt(p), np.sqrt(1 - p)])
    v2 = r @ np.diag([np.sqrt(1 - p), np.sqrt(p)])
    return [v1, v2]


def rotated_biased_qubit(theta: float = 0.7, p: float = 0.7, eta=BIAS_09) -> Instrument:
    """Weak qubit measurement followed by a rotation, read by a 90%-reliable detector.

    The workhorse fixture: its channel is primitive and the instrument is
    contractive, so filters converge and the invariant measure is unique.
    """
    return build_imperfect(biased_qubit_ops(theta, p), eta)


def biased_qubit(p: float = 0.7, eta=BIAS_09) -> Instrument:
    return build_imperfect(biased_qubit_ops(0.0, p), eta)


def projective(dim: int = 2) -> Instrument:
    ops = []
    for k in range(dim):
        v = np.zeros((dim, dim), dtype=complex)
        v[k, k] = 1.0
        ops.append(v)
    return build_imperfect(ops)


def uniform_bias(perfect_ops) -> Instrument:
    """Every reported outcome is uniformly random: the record carries no information."""
    m = len(perfect_ops)
    return build_imperfect(perfect_ops, np.full((m, m), 1.0 / m))


def identity_channel(dim: int = 2, m: int = 2) -> Instrument:
    """Uninformative instrument whose channel is the identity."""
    ops = [np.eye(dim, dtype=complex) / np.sqrt(m) for _ in range(m)]
    return uniform_bias(ops)


def depolarizing(dim: int = 2) -> Instrument:
    """Single outcome, fully depolarizing: ``rho -> tr(rho) Id/d``."""
    kraus = []
    for a in range(dim):
        for b in range(dim):
            k = np.zeros((dim, dim), dtype=complex)
            k[a, b] = 1.0 / np.sqrt(dim)
            kraus.append(k)
    return Instrument([OutcomeMap(kraus=kraus, label="1")])


def cycle(dim: int = 3) -> Instrument:
    """Single outcome classical cycle: Kraus operators ``|j+1><j|``.

    Irreducible with invariant state ``Id/d`` and period ``d``. (The unitary
    shift ``rho -> P rho P^dagger`` is not irreducible; it fixes every
    circulant state.)
    """
    kraus = []
    for j in range(dim):
        k = np.zeros((dim, dim), dtype=complex)
        k[(j + 1) % dim, j] = 1.0
        kraus.append(k)
    return Instrument([OutcomeMap(kraus=kraus, label="1")])


def unitary_shift(dim: int = 3) -> Instrument:
    p = np.roll(np.eye(dim, dtype=complex), 1, axis=0)
    return Instrument([OutcomeMap(kraus=[p], label="1")])


def amplitude_damping(gamma: float = 0.3) -> Instrument:
    """Two-outcome amplitude damping with a perfect detector; invariant state ``|0><0|``."""
    k0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    k1 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    return build_imperfect([k0, k1])


def rank_one_outcome(p: float = 0.5) -> Instrument:
    """An instrument with a rank-one outcome map ``rho -> |0><0| p <0|rho|0>``."""
    v1 = np.sqrt(p) * np.array([[1, 0], [0, 0]], dtype=complex)
    v2 = np.array([[np.sqrt(1 - p), 0], [0, 1]], dtype=complex)
    return build_imperfect([v1, v2])


def classical_chain(t=((0.8, 0.2), (0.3, 0.7))) -> Instrument:
    """Measure in the computational basis, jump ``i -> j`` with probability ``t[i, j]``, report ``j``.

    Outcome ``j`` has Kraus operators ``sqrt(t[i, j]) |j><i|``, so after one
    step the state is a basis projector and the trajectory is the classical
    Markov chain ``t``. Primitive when ``t`` has all entries positive.
    """
    t = np.asarray(t, dtype=float)
    d = t.shape[0]
    outcomes = []
    for j in range(d):
        kraus = []
        for i in range(d):
            k = np.zeros((d, d), dtype=complex)
            k[j, i] = np.sqrt(t[i, j])
            kraus.append(k)
        outcomes.append(OutcomeMap(kraus=kraus, label=str(j + 1)))
    return Instrument(outcomes)


def noisy_rotation(q: float = 0.1, theta: float = 0.7) -> Instrument:
    """Single outcome ``rho -> q R rho R^dagger + (1 - q) Id/2``; second eigenvalues have modulus ``q``."""
    r = rotation(theta)
    kraus = [np.sqrt(q) * r]
    for a in range(2):
        for b in range(2):
            k = np.zeros((2, 2), dtype=complex)
            k[a, b] = np.sqrt((1 - q) / 2)
            kraus.append(k)
    return Instrument([OutcomeMap(kraus=kraus, label="1")])


FIXTURES = {
    "rotated_biased_qubit": rotated_biased_qubit,
    "biased_qubit": biased_qubit,
    "projective": projective,
    "identity_channel": identity_channel,
    "depolarizing": depolarizing,
    "cycle": cycle,
    "amplitude_damping": amplitude_damping,
    "rank_one_outcome": rank_one_outcome,
    "classical_chain": classical_chain,
    "noisy_rotation": noisy_rotation,
}
