"""Quantum instruments: finite families of CP maps summing to a channel.

An :class:`OutcomeMap` is a CP map given by Kraus operators (or, for long
word compositions, only by its superoperator matrix). An :class:`Instrument`
is a labelled list of outcome maps whose sum is trace preserving.

Superoperator convention: row-major vectorization, so the map
``X -> sum_k A_k X A_k^dagger`` is represented by ``sum_k kron(A_k, conj(A_k))``
(see :mod:`qtraj.linalg`).
"""

from __future__ import annotations

from collections.abc import Hashable, Sequence
from typing import Optional

import numpy as np

from qtraj.config import get_tolerances
from qtraj.errors import (
    DimensionMismatch,
    NotStochastic,
    NotTracePreserving,
    UnknownLabel,
    WordTooLong,
)
from qtraj.linalg import as_matrix, dag, op_norm

KRAUS_CAP = 4096


class OutcomeMap:
    """A completely positive map ``X -> sum_k A_k X A_k^dagger``.

    Either ``kraus`` (non-empty list of d x d matrices) or ``superop`` (a
    d^2 x d^2 matrix, used when the Kraus list would be too long) must be
    given. Instances are treated as immutable.
    """

    def __init__(self, kraus=None, label: Hashable = None, superop=None):
        if kraus is None and superop is None:
            raise ValueError("need Kraus operators or a superoperator matrix")
        self.label = label
        self._rep = None
        if kraus is not None:
            mats = [as_matrix(k) for k in kraus]
            if not mats:
                raise ValueError("Kraus list must be non-empty")
            if len({k.shape for k in mats}) != 1:
                raise DimensionMismatch("Kraus operators have different shapes")
            ops = np.asarray(mats, dtype=complex)
            ops.setflags(write=False)
            self.kraus = ops
            self.dim = ops.shape[1]
        else:
            self.kraus = None
            s = np.asarray(superop, dtype=complex)
            dim = int(round(np.sqrt(s.shape[0])))
            if s.shape != (dim * dim, dim * dim):
                raise DimensionMismatch(f"superoperator shape {s.shape} is not (d^2, d^2)")
            s = s.copy()
            s.setflags(write=False)
            self._rep = s
            self.dim = dim

    def __repr__(self):
        form = f"{len(self.kraus)} Kraus" if self.kraus is not None else "superop"
        return f"OutcomeMap(label={self.label!r}, dim={self.dim}, {form})"

    @property
    def n_kraus(self) -> Optional[int]:
        return None if self.kraus is None else len(self.kraus)

    @property
    def rep(self) -> np.ndarray:
        """The d^2 x d^2 superoperator matrix (cached)."""
        if self._rep is None:
            a = self.kraus
            d = self.dim
            r = np.einsum("kab,kcd->acbd", a, a.conj()).reshape(d * d, d * d)
            r.setflags(write=False)
            self._rep = r
        return self._rep

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return apply(self, x)


def apply(phi: OutcomeMap, x: np.ndarray) -> np.ndarray:
    """Apply the map to a matrix, or to a stack of matrices ``(..., d, d)``."""
    x = np.asarray(x, dtype=complex)
    d = phi.dim
    if x.shape[-2:] != (d, d):
        raise DimensionMismatch(f"map has dimension {d}, input has shape {x.shape}")
    if phi.kraus is not None:
        a = phi.kraus
        return np.einsum("kab,...bc,kdc->...ad", a, x, a.conj())
    lead = x.shape[:-2]
    flat = x.reshape(-1, d * d)
    return (flat @ phi.rep.T).reshape(*lead, d, d)


def apply_adjoint(phi: OutcomeMap, b: np.ndarray) -> np.ndarray:
    """Apply the trace dual ``B -> sum_k A_k^dagger B A_k``."""
    b = np.asarray(b, dtype=complex)
    d = phi.dim
    if b.shape[-2:] != (d, d):
        raise DimensionMismatch(f"map has dimension {d}, input has shape {b.shape}")
    if phi.kraus is not None:
        a = phi.kraus
        return np.einsum("kba,...bc,kcd->...ad", a.conj(), b, a)
    lead = b.shape[:-2]
    flat = b.reshape(-1, d * d)
    return (flat @ adjoint_rep(phi).T).reshape(*lead, d, d)


def superop(phi: OutcomeMap) -> np.ndarray:
    return phi.rep


def adjoint_rep(phi: OutcomeMap) -> np.ndarray:
    """Matrix of the trace dual map: the conjugate transpose of ``rep``.

    ``tr(phi(rho) B) = tr(rho phi*(B))`` follows from the Hilbert-Schmidt
    inner product being the plain inner product of vectorizations.
    """
    return phi.rep.conj().T


def map_norm(phi: OutcomeMap) -> float:
    """``sup_{rho state} ||phi(rho)||_1``, which equals ``lambda_max(phi*(Id))``.

    For CP ``phi`` the output ``phi(rho)`` is PSD, so its trace norm is its
    trace ``tr(rho phi*(Id))``, maximized at the top eigenvector.
    """
    eff = apply_adjoint(phi, np.eye(phi.dim, dtype=complex))
    return float(max(0.0, np.linalg.eigvalsh(0.5 * (eff + dag(eff)))[-1]))


class Instrument:
    """A labelled family of outcome maps whose sum is trace preserving.

    Parameters
    ----------
    outcomes : sequence of OutcomeMap
        One map per outcome. Labels must be distinct; maps with ``label``
        ``None`` are labelled ``"1", "2", ...`` by position.
    validate : bool
        Check trace preservation against ``tol_tp``.
    source : dict, optional
        ``{"perfect_ops", "eta", "names"}`` when built by
        :func:`build_imperfect`; kept so the file writer can round-trip.
    """

    def __init__(self, outcomes: Sequence[OutcomeMap], validate: bool = True, source=None):
        outcomes = list(outcomes)
        if not outcomes:
            raise ValueError("an instrument needs at least one outcome")
        dims = {o.dim for o in outcomes}
        if len(dims) != 1:
            raise DimensionMismatch(f"outcome maps have different dimensions {sorted(dims)}")
        self.dim = dims.pop()
        fixed = []
        for pos, o in enumerate(outcomes):
            if o.label is None:
                o = OutcomeMap(kraus=o.kraus, superop=None if o.kraus is not None else o.rep,
                               label=str(pos + 1))
            fixed.append(o)
        self.outcomes = tuple(fixed)
        self.labels = tuple(o.label for o in self.outcomes)
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"duplicate outcome labels in {self.labels}")
        self._index = {lab: i for i, lab in enumerate(self.labels)}
        eye = np.eye(self.dim, dtype=complex)
        self.effects = np.array([apply_adjoint(o, eye) for o in self.outcomes])
        self.effects.setflags(write=False)
        self.source = source
        if validate:
            residual = self.tp_residual()
            if residual > get_tolerances().tol_tp:
                raise NotTracePreserving(
                    f"sum of effects differs from identity by {residual:.3e}", residual=residual
                )

    def __repr__(self):
        return f"Instrument(dim={self.dim}, labels={list(self.labels)})"

    def __len__(self):
        return len(self.outcomes)

    @property
    def m(self) -> int:
        return len(self.outcomes)

    def tp_residual(self) -> float:
        return op_norm(self.effects.sum(axis=0) - np.eye(self.dim))

    def index(self, label) -> int:
        """Position of an outcome. Integers also match their string form."""
        try:
            return self._index[label]
        except (KeyError, TypeError):
            pass
        if isinstance(label, (int, np.integer)) and str(label) in self._index:
            return self._index[str(label)]
        raise UnknownLabel(f"unknown outcome label {label!r}; labels are {list(self.labels)}")

    def indices(self, word) -> list[int]:
        return [self.index(lab) for lab in word]

    def __getitem__(self, label) -> OutcomeMap:
        return self.outcomes[self.index(label)]

    def relabel(self, mapping) -> "Instrument":
        outs = [OutcomeMap(kraus=o.kraus, superop=None if o.kraus is not None else o.rep,
                           label=mapping.get(o.label, o.label)) for o in self.outcomes]
        return Instrument(outs, validate=False)

    def conjugate(self, u: np.ndarray) -> "Instrument":
        """Change of basis ``A -> U A U^dagger`` applied to every Kraus operator."""
        u = as_matrix(u, self.dim)
        outs = []
        for o in self.outcomes:
            if o.kraus is not None:
                outs.append(OutcomeMap(kraus=u @ o.kraus @ dag(u), label=o.label))
            else:
                uu = np.kron(u, u.conj())
                outs.append(OutcomeMap(superop=uu @ o.rep @ dag(uu), label=o.label))
        return Instrument(outs, validate=False)


def check_bias_matrix(eta, n_columns: Optional[int] = None) -> np.ndarray:
    """Validate a column-stochastic bias matrix ``eta[i, j] = P(report i | true j)``."""
    eta = np.asarray(eta, dtype=float)
    if eta.ndim != 2:
        raise NotStochastic(f"bias matrix must be 2-D, got shape {eta.shape}")
    if n_columns is not None and eta.shape[1] != n_columns:
        raise NotStochastic(
            f"bias matrix has {eta.shape[1]} columns but there are {n_columns} perfect operators"
        )
    if np.any(eta < 0) or not np.all(np.isfinite(eta)):
        bad = np.argwhere(~(eta >= 0))[0]
        raise NotStochastic(f"negative or non-finite entry at {tuple(bad)}", column=int(bad[1]))
    sums = eta.sum(axis=0)
    dev = np.abs(sums - 1.0)
    j = int(np.argmax(dev))
    if dev[j] > get_tolerances().tol_stoch:
        raise NotStochastic(
            f"column {j} of the bias matrix sums to {sums[j]:.12g}, not 1",
            column=j,
            residual=float(dev[j]),
        )
    return eta


def build_imperfect(perfect_ops, eta=None, labels=None, names=None) -> Instrument:
    """Instrument of a biased detector on top of a perfect unraveling.

    Outcome ``i`` maps ``rho -> sum_j eta[i, j] V_j rho V_j^dagger``, i.e. its
    Kraus operators are ``sqrt(eta[i, j]) V_j`` for ``eta[i, j] > 0``. With
    ``eta=None`` the identity (perfect detection) is used.
    """
    ops = np.asarray([as_matrix(v) for v in perfect_ops], dtype=complex)
    if len({v.shape for v in ops}) != 1:
        raise DimensionMismatch("perfect operators have different shapes")
    dim = ops.shape[1]
    residual = op_norm(np.einsum("kba,kbc->ac", ops.conj(), ops) - np.eye(dim))
    if residual > get_tolerances().tol_tp:
        raise NotTracePreserving(
            f"perfect operators are not complete: residual {residual:.3e}", residual=residual
        )
    if eta is None:
        eta = np.eye(len(ops))
    eta = check_bias_matrix(eta, len(ops))
    if labels is None:
        labels = [str(i + 1) for i in range(eta.shape[0])]
    if len(labels) != eta.shape[0]:
        raise ValueError(f"{len(labels)} labels for {eta.shape[0]} outcomes")
    outcomes = []
    for i, lab in enumerate(labels):
        kraus = [np.sqrt(eta[i, j]) * ops[j] for j in range(len(ops)) if eta[i, j] > 0]
        if not kraus:
            kraus = [np.zeros((dim, dim), dtype=complex)]
        outcomes.append(OutcomeMap(kraus=kraus, label=lab))
    if names is None:
        names = [f"V{j + 1}" for j in range(len(ops))]
    source = {"perfect_ops": ops, "eta": eta, "names": list(names)}
    return Instrument(outcomes, source=source)


def outcome_probability(instr: Instrument, label, rho: np.ndarray) -> float:
    """``tr(phi_i(rho))``, clamped into [0, 1]."""
    i = instr.index(label)
    p = np.real(np.sum(instr.effects[i].T * np.asarray(rho)))
    return float(min(1.0, max(0.0, p)))


def outcome_probabilities(instr: Instrument, rho: np.ndarray) -> np.ndarray:
    """All outcome probabilities at once (not clamped)."""
    return np.real(np.einsum("kba,ab->k", instr.effects, np.asarray(rho)))


def total_channel(instr: Instrument) -> OutcomeMap:
    """The averaged channel ``sum_i phi_i``."""
    if all(o.kraus is not None for o in instr.outcomes):
        return OutcomeMap(kraus=np.concatenate([o.kraus for o in instr.outcomes]), label="total")
    return OutcomeMap(superop=sum(o.rep for o in instr.outcomes), label="total")


def compose_word(instr: Instrument, word, cap: int = KRAUS_CAP, allow_superop: bool = True) -> OutcomeMap:
    """The map ``phi_{i_n} o ... o phi_{i_1}`` of ``word = (i_1, ..., i_n)``.

    The first letter is applied first. Kraus lists multiply in length; once
    the product would exceed ``cap`` the result carries only its
    superoperator matrix, unless ``allow_superop`` is false, in which case
    :class:`WordTooLong` is raised.
    """
    idx = instr.indices(word)
    if not idx:
        raise ValueError("word must be non-empty")
    maps = [instr.outcomes[i] for i in idx]
    label = tuple(instr.labels[i] for i in idx)
    if len(idx) == 1:
        o = maps[0]
        return OutcomeMap(kraus=o.kraus, superop=None if o.kraus is not None else o.rep, label=label)
    count = 1
    for o in maps:
        count = count * o.n_kraus if o.n_kraus is not None else cap + 1
        if count > cap:
            break
    if count <= cap:
        ops = maps[0].kraus
        for o in maps[1:]:
            ops = np.einsum("kab,lbc->klac", o.kraus, ops).reshape(-1, instr.dim, instr.dim)
        return OutcomeMap(kraus=ops, label=label)
    if not allow_superop:
        raise WordTooLong(f"word of length {len(idx)} needs more than {cap} Kraus operators")
    r = maps[0].rep
    for o in maps[1:]:
        r = o.rep @ r
    return OutcomeMap(superop=r, label=label)
