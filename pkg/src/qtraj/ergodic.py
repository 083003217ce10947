"""Invariant measure of the trajectory Markov kernel, and ergodic averages.

Measures on the state space are approximated by :class:`EmpiricalMeasure`
(weighted atoms). The kernel ``Pi`` can be pushed through such a measure
exactly (each atom splits into one atom per outcome), or the invariant
measure can be sampled along one long trajectory. Distances between
measures are exact Wasserstein-1 distances for the trace-norm ground metric.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from qtraj.channel import certify
from qtraj.errors import AtomBudgetExceeded, TooManyAtoms
from qtraj.instrument import Instrument, apply
from qtraj.linalg import op_norm
from qtraj.trajectory import iter_state_chunks

PRUNE = 1e-12
ATOM_CAP = 10**5
LP_CAP = 2000


@dataclass
class EmpiricalMeasure:
    """Finitely many states ``states[k]`` with weights ``weights[k]`` summing to one."""

    states: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=complex)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.states.ndim != 3 or len(self.states) != len(self.weights):
            raise ValueError("need states of shape (n, d, d) and n weights")
        if np.any(self.weights < 0):
            raise ValueError("weights must be non-negative")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {self.weights.sum():.12g}, not 1")

    @classmethod
    def uniform(cls, states) -> "EmpiricalMeasure":
        states = np.asarray(states, dtype=complex)
        return cls(states, np.full(len(states), 1.0 / len(states)))

    @classmethod
    def point_mass(cls, rho) -> "EmpiricalMeasure":
        return cls(np.asarray(rho, dtype=complex)[None], np.ones(1))

    @classmethod
    def mixture(cls, alpha: float, mu: "EmpiricalMeasure", nu: "EmpiricalMeasure") -> "EmpiricalMeasure":
        return cls(np.concatenate([mu.states, nu.states]),
                   np.concatenate([alpha * mu.weights, (1 - alpha) * nu.weights]))

    def __len__(self):
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def mean(self) -> np.ndarray:
        """The barycenter ``E_mu[rho]``."""
        return np.einsum("k,kab->ab", self.weights, self.states)

    def expectation(self, g) -> float:
        return float(np.dot(self.weights, g(self.states)))

    def pruned(self, threshold: float = PRUNE) -> "EmpiricalMeasure":
        keep = self.weights >= threshold
        w = self.weights[keep]
        return EmpiricalMeasure(self.states[keep], w / w.sum())

    def resample(self, size: int, rng: np.random.Generator) -> "EmpiricalMeasure":
        """Uniform measure on ``size`` atoms drawn i.i.d. from this one."""
        idx = rng.choice(len(self), size=size, p=self.weights / self.weights.sum())
        return EmpiricalMeasure.uniform(self.states[idx])


def kernel_push(instr: Instrument, mu: EmpiricalMeasure, prune: float = PRUNE) -> EmpiricalMeasure:
    """Exact ``mu Pi``: atom ``(rho, w)`` becomes ``(phi_i(rho)/p_i, w p_i)`` for every outcome ``i``.

    New atoms are ordered atom-major, outcome-minor, so pushing a point mass
    ``n`` times lists words in lexicographic order. Atoms with zero weight
    are dropped; with ``prune > 0`` atoms lighter than ``prune`` are dropped
    as well and the remaining weights renormalized.
    """
    n, d = len(mu), mu.dim
    images = np.stack([apply(o, mu.states) for o in instr.outcomes], axis=1)
    probs = np.real(np.trace(images, axis1=2, axis2=3))
    weights = (mu.weights[:, None] * probs).reshape(-1)
    images = images.reshape(-1, d, d)
    probs = probs.reshape(-1)
    keep = (probs > 0) & (weights > 0) & (weights >= prune)
    states = images[keep] / probs[keep][:, None, None]
    states = 0.5 * (states + np.conj(np.swapaxes(states, 1, 2)))
    w = weights[keep]
    return EmpiricalMeasure(states, w / w.sum())


def kernel_push_n(instr: Instrument, mu: EmpiricalMeasure, n: int, prune: float = PRUNE,
                  cap: int = ATOM_CAP) -> EmpiricalMeasure:
    for _ in range(n):
        mu = kernel_push(instr, mu, prune)
        if len(mu) > cap:
            raise AtomBudgetExceeded(f"{len(mu)} atoms after pruning exceed the cap {cap}")
    return mu


def cesaro_push(instr: Instrument, mu: EmpiricalMeasure, period: int, n: int, prune: float = PRUNE,
                cap: int = ATOM_CAP) -> EmpiricalMeasure:
    """``(1/l) sum_{r<l} mu Pi^(l n + r)`` computed exactly (up to pruning)."""
    cur = kernel_push_n(instr, mu, period * n, prune, cap)
    states, weights = [], []
    for r in range(period):
        if r:
            cur = kernel_push_n(instr, cur, 1, prune, cap)
        states.append(cur.states)
        weights.append(cur.weights / period)
    total = sum(len(w) for w in weights)
    if total > cap:
        raise AtomBudgetExceeded(f"{total} atoms in the Cesaro mixture exceed the cap {cap}")
    return EmpiricalMeasure(np.concatenate(states), np.concatenate(weights))


def sample_invariant(instr: Instrument, rho0: np.ndarray, burn_in: int = 1000, n_samples: int = 2000,
                     thinning: int = 10, seed: Optional[int] = None, check: bool = True) -> EmpiricalMeasure:
    """Uniform atoms at every ``thinning``-th state of one trajectory after ``burn_in`` steps.

    Warns (does not fail) if the channel is not certified irreducible, since
    then the invariant measure need not be unique.
    """
    if check and not certify(instr).irreducible:
        warnings.warn("channel is not certified irreducible; the invariant measure may not be unique",
                      stacklevel=2)
    rng = np.random.default_rng(seed)
    total = burn_in + n_samples * thinning
    out = np.empty((n_samples, instr.dim, instr.dim), dtype=complex)
    k = 0
    pos = 0
    for chunk in iter_state_chunks(instr, rho0, total, rng):
        steps = np.arange(pos + 1, pos + len(chunk) + 1)
        sel = (steps > burn_in) & ((steps - burn_in) % thinning == 0)
        picked = chunk[sel]
        out[k:k + len(picked)] = picked
        k += len(picked)
        pos += len(chunk)
    return EmpiricalMeasure.uniform(out)


def trace_distance_matrix(a: np.ndarray, b: np.ndarray, block: int = 1 << 18) -> np.ndarray:
    """Pairwise ``||a_i - b_j||_1`` for stacks of Hermitian matrices."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    n, m, d = len(a), len(b), a.shape[1]
    if d == 2:
        # Hermitian 2x2: eigenvalues t/2 +- sqrt(((p - q)/2)^2 + |c|^2)
        diff00 = a[:, None, 0, 0].real - b[None, :, 0, 0].real
        diff11 = a[:, None, 1, 1].real - b[None, :, 1, 1].real
        diff01 = a[:, None, 0, 1] - b[None, :, 0, 1]
        half_tr = 0.5 * (diff00 + diff11)
        rad = np.sqrt((0.5 * (diff00 - diff11)) ** 2 + np.abs(diff01) ** 2)
        return np.maximum(2 * np.abs(half_tr), 2 * rad)
    out = np.empty((n, m))
    rows = max(1, block // max(m, 1))
    for s in range(0, n, rows):
        diff = a[s:s + rows, None] - b[None, :]
        out[s:s + rows] = np.sum(np.abs(np.linalg.eigvalsh(diff)), axis=-1)
    return out


def _import_ot():
    # POT probes optional tensor backends on import; the LP solver needs none of them
    for key in ("POT_BACKEND_DISABLE_TENSORFLOW", "POT_BACKEND_DISABLE_PYTORCH",
                "POT_BACKEND_DISABLE_JAX", "POT_BACKEND_DISABLE_CUPY"):
        os.environ.setdefault(key, "1")
    import ot

    return ot


def optimal_transport_cost(a: np.ndarray, b: np.ndarray, cost: np.ndarray) -> float:
    """Exact discrete OT cost (network simplex)."""
    ot = _import_ot()
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    b = b * (a.sum() / b.sum())
    with warnings.catch_warnings():
        warnings.simplefilter("error", UserWarning)
        value = ot.emd2(a, b, np.ascontiguousarray(cost, dtype=float), numItermax=10**8)
    return float(max(0.0, value))


def wasserstein1(mu: EmpiricalMeasure, nu: EmpiricalMeasure, cap: int = LP_CAP) -> float:
    """Exact W1 distance with trace-norm ground cost.

    By Kantorovich-Rubinstein duality this is the supremum of
    ``|E_mu f - E_nu f|`` over 1-Lipschitz ``f``. Raises
    :class:`TooManyAtoms` above ``cap`` atoms per measure.
    """
    if len(mu) > cap or len(nu) > cap:
        raise TooManyAtoms(f"{len(mu)} and {len(nu)} atoms; the exact solver cap is {cap}")
    cost = trace_distance_matrix(mu.states, nu.states)
    return optimal_transport_cost(mu.weights, nu.weights, cost)


def wasserstein1_subsampled(mu: EmpiricalMeasure, nu: EmpiricalMeasure, cap: int = LP_CAP,
                            repetitions: int = 3, seed: Optional[int] = None):
    """W1 for large measures: resample each measure above ``cap`` down to ``cap`` uniform atoms.

    Returns ``(mean, spread)`` over ``repetitions`` resamplings, where
    spread is max minus min; exact (spread 0) when both fit under the cap.
    """
    if len(mu) <= cap and len(nu) <= cap:
        return wasserstein1(mu, nu, cap), 0.0
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(repetitions):
        a = mu if len(mu) <= cap else mu.resample(cap, rng)
        b = nu if len(nu) <= cap else nu.resample(cap, rng)
        vals.append(wasserstein1(a, b, cap))
    return float(np.mean(vals)), float(np.max(vals) - np.min(vals))


# -- state functionals ---------------------------------------------------------
# Each takes a stack of states (n, d, d) and returns n real values.

class Functional:
    """A named, vectorized, continuous function on states."""

    def __init__(self, name: str, fn: Callable[[np.ndarray], np.ndarray]):
        self.name = name
        self._fn = fn

    def __call__(self, states) -> np.ndarray:
        states = np.asarray(states, dtype=complex)
        single = states.ndim == 2
        out = np.asarray(self._fn(states[None] if single else states), dtype=float)
        return out[0] if single else out

    def __repr__(self):
        return f"Functional({self.name!r})"


def linear(a: np.ndarray, name: str = "linear") -> Functional:
    """``rho -> tr(A rho)`` for Hermitian ``A`` with ``||A||_inf <= 1`` (hence 1-Lipschitz in trace norm)."""
    a = np.asarray(a, dtype=complex)
    if op_norm(a - a.conj().T) > 1e-12:
        raise ValueError("observable must be Hermitian")
    if op_norm(a) > 1 + 1e-12:
        raise ValueError(f"||A||_inf = {op_norm(a):.6g} > 1; rescale the observable")
    at = a.T.copy()
    return Functional(name, lambda s: np.real(np.einsum("ab,kab->k", at, s)))


purity = Functional("purity", lambda s: np.real(np.einsum("kab,kba->k", s, s)))


def _entropy(s):
    w = np.clip(np.linalg.eigvalsh(s), 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(w > 0, -w * np.log(w), 0.0)
    return terms.sum(axis=-1)


von_neumann_entropy = Functional("entropy", _entropy)
max_eigenvalue = Functional("max_eigenvalue", lambda s: np.linalg.eigvalsh(s)[:, -1])


def constant(c: float = 1.0) -> Functional:
    return Functional(f"constant({c:g})", lambda s: np.full(len(s), float(c)))


def polynomial(terms: dict, name: str = "polynomial") -> Functional:
    """Real part of ``sum_t c_t prod_{(i, j) in t} rho[i, j]``.

    ``terms`` maps tuples of index pairs to coefficients, e.g.
    ``{((0, 0),): 1.0, ((0, 1), (1, 0)): 2.0}`` is ``rho00 + 2 |rho01|^2``.
    """
    items = [(tuple(tuple(ij) for ij in key), complex(c)) for key, c in terms.items()]

    def fn(s):
        acc = np.zeros(len(s), dtype=complex)
        for key, c in items:
            prod = np.full(len(s), c)
            for i, j in key:
                prod = prod * s[:, i, j]
            acc += prod
        return acc.real

    return Functional(name, fn)


FUNCTIONALS = {
    "purity": purity,
    "entropy": von_neumann_entropy,
    "max_eigenvalue": max_eigenvalue,
}


def ergodic_mean(instr: Instrument, rho0: np.ndarray, g, n: int, seed: Optional[int] = None,
                 checkpoints: Optional[Sequence[int]] = None):
    """Time average ``(g(rho_1) + ... + g(rho_n)) / n`` along one trajectory.

    ``g`` is a :class:`Functional` (or any vectorized callable) or a list
    of them, in which case an array of averages is returned. With
    ``checkpoints`` the running means at those step counts are returned as a
    second value, shaped ``(len(checkpoints), n_functionals)``.
    """
    many = isinstance(g, (list, tuple))
    gs = list(g) if many else [g]
    rng = np.random.default_rng(seed)
    sums = np.zeros(len(gs))
    marks = sorted(set(int(c) for c in checkpoints)) if checkpoints is not None else []
    trace = []
    pos = 0
    for chunk in iter_state_chunks(instr, rho0, n, rng):
        vals = np.stack([np.asarray(f(chunk), dtype=float) for f in gs], axis=1)
        if marks:
            csum = np.cumsum(vals, axis=0) + sums
            for c in marks:
                if pos < c <= pos + len(chunk):
                    trace.append(csum[c - pos - 1] / c)
        sums += vals.sum(axis=0)
        pos += len(chunk)
    means = sums / n
    result = means if many else float(means[0])
    if checkpoints is not None:
        tr = np.array(trace)
        return result, (tr if many else tr[:, 0] if len(tr) else tr)
    return result
