"""Quantum trajectories, the mismatched filter, and exact path-space quantities.

Randomness: every sampler draws from ``numpy.random.default_rng(seed)``
(the PCG64 bit generator); outcomes are chosen by inverse CDF from one
uniform draw per step, with the outcome probabilities recomputed from the
current state each time.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from qtraj.config import get_tolerances
from qtraj.errors import (
    DegenerateDistribution,
    FilterCollapse,
    HorizonTooLarge,
    KernelConditionViolated,
    ZeroPrefixProbability,
)
from qtraj.instrument import Instrument, apply, apply_adjoint, outcome_probabilities
from qtraj.linalg import check_density_matrix, dag, fidelity, hermitize, project_state, state_fidelity

RNG_ALGORITHM = "PCG64"
ENUMERATION_CAP = 10**6


class _Updater:
    """Per-outcome unnormalized updates with the Kraus stacks hoisted out of the loop."""

    def __init__(self, instr: Instrument):
        self.instr = instr
        d = instr.dim
        self.effects_flat = np.ascontiguousarray(np.swapaxes(instr.effects, 1, 2)).reshape(-1, d * d)
        self.kraus = [o.kraus for o in instr.outcomes]
        self.kraus_dag = [None if k is None else dag(k) for k in self.kraus]

    def probabilities(self, rho):
        return (self.effects_flat @ rho.reshape(-1)).real

    def update(self, i, rho):
        k = self.kraus[i]
        if k is None:
            return apply(self.instr.outcomes[i], rho)
        if len(k) == 1:
            return k[0] @ rho @ self.kraus_dag[i][0]
        return np.sum(k @ rho @ self.kraus_dag[i], axis=0)


def _choose(p, u):
    c = np.cumsum(p)
    i = int(np.searchsorted(c, u * c[-1], side="right"))
    return min(i, len(p) - 1)


def _clipped_probabilities(upd, rho):
    p = np.clip(upd.probabilities(rho), 0.0, None)
    if p.max() < get_tolerances().tol_prob:
        raise DegenerateDistribution(f"all outcome probabilities vanish ({p}); state is not valid")
    return p


def step(instr: Instrument, rho: np.ndarray, rng: np.random.Generator):
    """One measurement: returns ``(label, next_state)``.

    The outcome is drawn with probability ``tr phi_i(rho)``; the post-state is
    renormalized and PSD-clamped.
    """
    upd = _Updater(instr)
    p = _clipped_probabilities(upd, rho)
    i = _choose(p, rng.random())
    return instr.labels[i], project_state(upd.update(i, rho))


def filter_step(instr: Instrument, rho_hat: np.ndarray, label) -> np.ndarray:
    """Update an estimate with an observed outcome; :class:`FilterCollapse` if the outcome is impossible for it."""
    i = instr.index(label)
    out = apply(instr.outcomes[i], rho_hat)
    mass = np.trace(out).real
    if mass <= get_tolerances().tol_filter:
        raise FilterCollapse(
            f"estimate gives outcome {label!r} probability {mass:.3e}", label=label, mass=mass
        )
    return project_state(out)


class KernelCheck(NamedTuple):
    holds: bool
    c: float


def kernel_condition(rho0: np.ndarray, rho_hat0: np.ndarray) -> KernelCheck:
    """Check ``ker(rho_hat0) <= ker(rho0)``, i.e. ``rho0 << rho_hat0``.

    ``c`` is ``lambda_max(rho_hat0^{-1/2} rho0 rho_hat0^{-1/2})`` with the
    pseudo-inverse taken on the range of ``rho_hat0``; when the condition
    holds, ``rho0 <= c rho_hat0``. When it fails, ``c`` is ``inf``.
    """
    tol = get_tolerances().tol_rank
    w, v = np.linalg.eigh(hermitize(np.asarray(rho_hat0, dtype=complex)))
    rho0 = hermitize(np.asarray(rho0, dtype=complex))
    ker = v[:, w <= tol]
    if ker.shape[1] and np.max(np.real(np.einsum("ak,ab,bk->k", ker.conj(), rho0, ker))) > tol:
        return KernelCheck(False, float("inf"))
    rng_v = v[:, w > tol]
    inv_sqrt = rng_v / np.sqrt(w[w > tol])
    m = dag(inv_sqrt) @ rho0 @ inv_sqrt
    return KernelCheck(True, float(np.linalg.eigvalsh(hermitize(m))[-1]))


@dataclass
class TrajectoryRecord:
    steps: int
    word: list
    fidelities: np.ndarray
    log_likelihood: float
    seed: Optional[int] = None
    log_likelihoods: np.ndarray = field(default=None, repr=False)
    states: Optional[np.ndarray] = field(default=None, repr=False)
    est_states: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def final_fidelity(self) -> float:
        return float(self.fidelities[-1])


def run_pair(
    instr: Instrument,
    rho0: np.ndarray,
    rho_hat0: np.ndarray,
    n: int,
    seed: Optional[int] = None,
    store_states: bool = False,
) -> TrajectoryRecord:
    """Simulate the true trajectory from ``rho0`` and the filter started at ``rho_hat0``.

    Outcomes are drawn from the true state; both states are updated with
    the same outcome. ``fidelities[k]`` is ``F(rho_k, rho_hat_k)`` for
    ``k = 0..n`` and ``log_likelihoods[k]`` the log-probability of the first
    ``k`` outcomes.
    """
    if not kernel_condition(rho0, rho_hat0).holds:
        raise KernelConditionViolated("ker(rho_hat0) is not contained in ker(rho0)")
    tol = get_tolerances()
    upd = _Updater(instr)
    rng = np.random.default_rng(seed)
    rho = project_state(check_density_matrix(rho0))
    est = project_state(check_density_matrix(rho_hat0))
    word = []
    fids = np.empty(n + 1)
    logl = np.zeros(n + 1)
    fids[0] = state_fidelity(rho, est)
    if store_states:
        states = np.empty((n + 1,) + rho.shape, dtype=complex)
        est_states = np.empty_like(states)
        states[0], est_states[0] = rho, est
    for k in range(1, n + 1):
        p = _clipped_probabilities(upd, rho)
        i = _choose(p, rng.random())
        rho_u = upd.update(i, rho)
        est_u = upd.update(i, est)
        mass = np.trace(est_u).real
        if mass <= tol.tol_filter:
            raise FilterCollapse(
                f"filter collapsed at step {k} on outcome {instr.labels[i]!r} (mass {mass:.3e})",
                step=k, label=instr.labels[i], mass=mass,
            )
        rho = project_state(rho_u)
        est = project_state(est_u)
        word.append(instr.labels[i])
        logl[k] = logl[k - 1] + np.log(p[i] / p.sum())
        fids[k] = state_fidelity(rho, est)
        if store_states:
            states[k], est_states[k] = rho, est
    return TrajectoryRecord(
        steps=n,
        word=word,
        fidelities=fids,
        log_likelihood=float(logl[-1]),
        seed=seed,
        log_likelihoods=logl,
        states=states if store_states else None,
        est_states=est_states if store_states else None,
    )


def sample_trajectory(instr: Instrument, rho0: np.ndarray, n: int, rng: np.random.Generator,
                      callback=None):
    """Run ``n`` steps from ``rho0``; returns ``(word_indices, final_state)``.

    ``callback(k, i, rho)`` is called after every step with the step number,
    the outcome index and the new state.
    """
    upd = _Updater(instr)
    rho = project_state(rho0)
    idx = np.empty(n, dtype=int)
    u = rng.random(n)
    for k in range(n):
        p = _clipped_probabilities(upd, rho)
        i = _choose(p, u[k])
        rho = project_state(upd.update(i, rho))
        idx[k] = i
        if callback is not None:
            callback(k + 1, i, rho)
    return idx, rho


def iter_state_chunks(instr: Instrument, rho0: np.ndarray, n: int, rng: np.random.Generator,
                      chunk: int = 65536):
    """Yield the states ``rho_1..rho_n`` of one trajectory in arrays of at most ``chunk`` states."""
    upd = _Updater(instr)
    rho = project_state(rho0)
    done = 0
    while done < n:
        size = min(chunk, n - done)
        u = rng.random(size)
        buf = np.empty((size,) + rho.shape, dtype=complex)
        for k in range(size):
            p = _clipped_probabilities(upd, rho)
            i = _choose(p, u[k])
            rho = project_state(upd.update(i, rho))
            buf[k] = rho
        done += size
        yield buf


def _project_batch(x: np.ndarray) -> np.ndarray:
    """:func:`project_state` applied to a stack of states."""
    x = 0.5 * (x + dag(x))
    x = x / np.real(np.trace(x, axis1=1, axis2=2))[:, None, None]
    w = np.linalg.eigvalsh(x)[:, 0]
    for k in np.flatnonzero(w < 0):
        x[k] = project_state(x[k])
    return x


def sample_words(instr: Instrument, rho0: np.ndarray, n: int, n_samples: int, seed=None) -> np.ndarray:
    """``n_samples`` independent outcome words of length ``n``, as an ``(n_samples, n)`` index array.

    All paths advance together. ``rho0`` is one state or a stack of
    ``n_samples`` initial states (one per path).
    """
    rng = np.random.default_rng(seed)
    d = instr.dim
    rho0 = np.asarray(rho0, dtype=complex)
    states = np.broadcast_to(rho0, (n_samples, d, d)).copy()
    states = _project_batch(states)
    eff = np.ascontiguousarray(np.swapaxes(instr.effects, 1, 2)).reshape(instr.m, d * d)
    words = np.empty((n_samples, n), dtype=int)
    for k in range(n):
        p = np.clip((states.reshape(n_samples, -1) @ eff.T).real, 0.0, None)
        c = np.cumsum(p, axis=1)
        u = rng.random(n_samples) * c[:, -1]
        idx = np.minimum((c <= u[:, None]).sum(axis=1), instr.m - 1)
        words[:, k] = idx
        for i, o in enumerate(instr.outcomes):
            sel = idx == i
            if sel.any():
                states[sel] = apply(o, states[sel])
        states = _project_batch(states)
    return words


def conditional_fidelity_expectation(instr: Instrument, rho: np.ndarray, rho_hat: np.ndarray) -> float:
    """Exact ``E[F(rho_1, rho_hat_1) | rho_0 = rho, rho_hat_0 = rho_hat]``.

    Branches with true probability below ``tol_prob`` are skipped.
    """
    tol = get_tolerances()
    total = 0.0
    for o in instr.outcomes:
        a = apply(o, rho)
        p = np.trace(a).real
        if p < tol.tol_prob:
            continue
        b = apply(o, rho_hat)
        q = np.trace(b).real
        if q <= 0:
            continue
        total += p * fidelity(project_state(a), project_state(b))
    return float(total)


def cylinder_probability(instr: Instrument, word, rho: np.ndarray) -> float:
    """``tr(phi_word(rho))``; the empty word has probability 1."""
    x = np.asarray(rho, dtype=complex)
    for i in instr.indices(word):
        x = apply(instr.outcomes[i], x)
    return float(min(1.0, max(0.0, np.trace(x).real)))


def word_distribution(instr: Instrument, rho: np.ndarray, n: int, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """Probabilities of all ``m**n`` words of length ``n``.

    Index order is lexicographic in outcome positions with the first letter
    most significant, matching ``itertools.product(range(m), repeat=n)``.
    """
    m = instr.m
    if m**n > cap:
        raise HorizonTooLarge(f"{m}**{n} words exceed the enumeration cap {cap}")
    x = np.asarray(rho, dtype=complex)[None]
    for _ in range(n):
        x = np.stack([apply(o, x) for o in instr.outcomes], axis=1).reshape(-1, instr.dim, instr.dim)
    return np.real(np.trace(x, axis1=1, axis2=2))


def all_words(instr: Instrument, n: int):
    return [tuple(instr.labels[i] for i in w) for w in itertools.product(range(instr.m), repeat=n)]


def tv_distance_horizon(instr: Instrument, rho: np.ndarray, sigma: np.ndarray, n: int,
                        cap: int = ENUMERATION_CAP) -> float:
    """Exact total-variation distance between the outcome laws up to time ``n``."""
    p = word_distribution(instr, rho, n, cap)
    q = word_distribution(instr, sigma, n, cap)
    return float(0.5 * np.sum(np.abs(p - q)))


def dual_effect(instr: Instrument, word) -> np.ndarray:
    """``phi*_{w_1} o ... o phi*_{w_n}(Id)``, the effect of the whole word."""
    e = np.eye(instr.dim, dtype=complex)
    for i in reversed(instr.indices(word)):
        e = apply_adjoint(instr.outcomes[i], e)
    return e


def dual_martingale_series(instr: Instrument, word) -> list:
    """``M_k = phi*_{w_1} o ... o phi*_{w_k}(Id) / P^sigma(w_1..w_k)`` for ``k = 1..n``, ``sigma = Id/d``.

    Under ``P^sigma`` this is a martingale, and ``||M_k||_inf <= d`` because
    ``M_k`` is PSD with trace ``d``.
    """
    d = instr.dim
    out = []
    for k in range(1, len(word) + 1):
        e = dual_effect(instr, word[:k])
        prob = np.trace(e).real / d
        if prob <= 0:
            raise ZeroPrefixProbability(f"prefix {list(word[:k])} has probability zero under Id/d")
        out.append(e / prob)
    return out


def martingale_defect(instr: Instrument, prefix) -> float:
    """``max |sum_i P^sigma(i | prefix) M(prefix + i) - M(prefix)|`` by next-letter enumeration."""
    d = instr.dim
    prefix = list(prefix)
    e = dual_effect(instr, prefix)
    p_prefix = np.trace(e).real / d
    m_prefix = e / p_prefix
    acc = np.zeros_like(e)
    for lab in instr.labels:
        e_next = dual_effect(instr, prefix + [lab])
        p_next = np.trace(e_next).real / d
        if p_next <= 0:
            continue
        acc += (p_next / p_prefix) * (e_next / p_next)
    return float(np.max(np.abs(acc - m_prefix)))
