"""Spectral certification of the averaged channel.

Invariant state, irreducibility, period (from the peripheral spectrum),
primitivity, and Cesaro averages of channel iterates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from qtraj.config import get_tolerances
from qtraj.errors import NoFixedPoint
from qtraj.instrument import Instrument, OutcomeMap, apply, total_channel
from qtraj.linalg import dag, hermitize, trace_norm, unvec


def _as_channel(channel) -> OutcomeMap:
    return total_channel(channel) if isinstance(channel, Instrument) else channel


@dataclass
class ChannelCertificate:
    invariant_state: np.ndarray
    fixed_space_dim: int
    min_eig_inv: float
    irreducible: bool
    period: Optional[int]
    peripheral_eigenvalues: list = field(default_factory=list)
    primitive: bool = False
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        rho = self.invariant_state
        return {
            "irreducible": self.irreducible,
            "primitive": self.primitive,
            "period": self.period,
            "fixed_space_dim": self.fixed_space_dim,
            "min_eig_inv": self.min_eig_inv,
            "peripheral_eigenvalues": [[float(z.real), float(z.imag)] for z in self.peripheral_eigenvalues],
            "invariant_state": [[[float(z.real), float(z.imag)] for z in row] for row in rho],
            "notes": list(self.notes),
        }


def fixed_space(channel) -> np.ndarray:
    """Orthonormal basis (columns, vectorized) of the numerical kernel of ``rep - I``.

    Uses singular values below ``tol_fix``, i.e. geometric multiplicity.
    """
    phi = _as_channel(channel)
    r = phi.rep
    n = r.shape[0]
    _, s, vh = np.linalg.svd(r - np.eye(n))
    keep = s <= get_tolerances().tol_fix
    return dag(vh[keep])


def invariant_state(channel) -> np.ndarray:
    """A fixed state of a trace-preserving channel.

    Built from the kernel of ``rep - I``: Hermitian parts of the kernel
    vectors are fixed points too, and for a positive trace-preserving map the
    positive part of a Hermitian fixed point is again fixed. The candidate
    with the largest trace is normalized (or, if all are traceless, the
    positive part of the first one).
    """
    phi = _as_channel(channel)
    d = phi.dim
    basis = fixed_space(phi)
    if basis.shape[1] == 0:
        # numerically no eigenvalue within tol_fix of 1; take the closest one
        w, v = np.linalg.eig(phi.rep)
        k = int(np.argmin(np.abs(w - 1)))
        if abs(w[k] - 1) > 1e-6:
            raise NoFixedPoint(f"closest eigenvalue to 1 is {w[k]:.6g}; input is not trace preserving")
        basis = v[:, [k]]
    cands = []
    for col in basis.T:
        x = unvec(col, d)
        cands.append(hermitize(x))
        cands.append(hermitize(1j * x))
    traces = np.array([np.trace(c).real for c in cands])
    k = int(np.argmax(np.abs(traces)))
    if abs(traces[k]) > 1e-8:
        x = cands[k] / traces[k]
    else:
        x = cands[int(np.argmax([trace_norm(c) for c in cands]))]
    w, v = np.linalg.eigh(hermitize(x))
    if w[-1] <= 0:
        w, v = -w[::-1], v[:, ::-1]
    w = np.clip(w, 0.0, None)
    rho = (v * w) @ dag(v)
    rho = rho / np.trace(rho).real
    return hermitize(rho)


def certify(channel) -> ChannelCertificate:
    """Spectral certificate: fixed-space dimension, irreducibility, period, primitivity.

    The period of an irreducible channel is read off the peripheral
    spectrum, which for irreducible channels consists exactly of the
    ``period``-th roots of unity, each simple. If the peripheral eigenvalues
    do not match that pattern the period is reported as ``None`` with a note.
    For reducible channels the period is ``None``.
    """
    tol = get_tolerances()
    phi = _as_channel(channel)
    rho = invariant_state(phi)
    fdim = fixed_space(phi).shape[1]
    min_eig = float(np.linalg.eigvalsh(rho)[0])
    irreducible = fdim == 1 and min_eig > tol.tol_rank
    eig = np.linalg.eigvals(phi.rep)
    peripheral = sorted(eig[np.abs(eig) >= 1 - tol.tol_peri], key=lambda z: np.angle(z) % (2 * np.pi))
    notes = []
    period = None
    if irreducible:
        ell = len(peripheral)
        roots = np.exp(2j * np.pi * np.arange(ell) / ell)
        matched = all(np.min(np.abs(roots - z)) <= tol.tol_peri for z in peripheral)
        distinct = all(np.min(np.abs(np.asarray(peripheral) - r)) <= tol.tol_peri for r in roots)
        if matched and distinct:
            period = ell
        else:
            notes.append(
                f"{ell} peripheral eigenvalues do not form the {ell}-th roots of unity; period unknown"
            )
    else:
        if fdim != 1:
            notes.append(f"fixed space has dimension {fdim}")
        if min_eig <= tol.tol_rank:
            notes.append(f"invariant state is rank deficient (min eigenvalue {min_eig:.3e})")
    return ChannelCertificate(
        invariant_state=rho,
        fixed_space_dim=fdim,
        min_eig_inv=min_eig,
        irreducible=irreducible,
        period=period,
        peripheral_eigenvalues=list(peripheral),
        primitive=bool(irreducible and period == 1),
        notes=notes,
    )


def _probe_states(dim, rng):
    probes = []
    for j in range(dim):
        p = np.zeros((dim, dim), dtype=complex)
        p[j, j] = 1.0
        probes.append(p)
    for _ in range(max(1, dim * (dim - 1) // 2)):
        v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        v /= np.linalg.norm(v)
        probes.append(np.outer(v, v.conj()))
    return np.array(probes)


def primitivity_index(phi: OutcomeMap, n_max: Optional[int] = None, seed: int = 0) -> Optional[int]:
    """Smallest ``n <= n_max`` at which all probe states are mapped to positive definite ones.

    Probes are the basis projectors plus ``d(d-1)/2`` random rank-one states.
    Images are renormalized to unit trace before the eigenvalue test, so the
    overall scale of a word map does not matter. Returns ``None`` when no
    such ``n`` is found.
    """
    tol = get_tolerances()
    d = phi.dim
    if n_max is None:
        n_max = 4 * d * d
    x = _probe_states(d, np.random.default_rng(seed))
    for n in range(1, n_max + 1):
        x = apply(phi, x)
        tr = np.real(np.trace(x, axis1=1, axis2=2))
        if np.any(tr <= 0):
            return None
        x = x / tr[:, None, None]
        if np.all(np.linalg.eigvalsh(hermitize(x))[:, 0] > tol.tol_rank):
            return n
    return None


def is_primitive_map(phi: OutcomeMap, n_max: Optional[int] = None, seed: int = 0) -> bool:
    """One-sided primitivity certificate: ``True`` means certified within ``n_max`` (default ``4 d^2``)."""
    return primitivity_index(phi, n_max, seed) is not None


def cesaro_iterate(channel, rho: np.ndarray, period: int, n: int) -> np.ndarray:
    """``(1/l) sum_{r<l} Phi^(l n + r)(rho)`` by repeated application of the superoperator."""
    if period < 1 or n < 0:
        raise ValueError("need period >= 1 and n >= 0")
    phi = _as_channel(channel)
    r = phi.rep
    d = phi.dim
    v = np.asarray(rho, dtype=complex).reshape(-1)
    for _ in range(period * n):
        v = r @ v
    acc = np.zeros_like(v)
    for _ in range(period):
        acc += v
        v = r @ v
    return unvec(acc / period, d)
