"""Numerical evidence for contractivity: words whose maps become rank one.

Three tools:

* :func:`rank_one_defect` measures how far a CP map is from ``Z tr(X .)``
  (ratio of the two largest singular values of its superoperator);
* :func:`certify_primitive_word` powers a primitive word map until the
  defect is below ``tol_cont``;
* :func:`search_contractive_sequence` looks for such words along a sampled
  trajectory and by a small beam search;

plus :func:`nd_falsifier`, a randomized search for subspaces on which all
words of a perfect unraveling act as scaled isometries ("dark" subspaces).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from qtraj.channel import primitivity_index
from qtraj.config import get_tolerances
from qtraj.errors import NotUnraveling, ZeroMap
from qtraj.instrument import Instrument, OutcomeMap, compose_word
from qtraj.linalg import as_matrix, dag, hermitize, op_norm, project_state, unvec
from qtraj.rand import haar_subspace
from qtraj.trajectory import _choose, _clipped_probabilities, _Updater


def _rep_of(phi) -> np.ndarray:
    return phi.rep if isinstance(phi, OutcomeMap) else np.asarray(phi, dtype=complex)


def rank_one_defect(phi) -> float:
    """``s_2 / s_1`` for the singular values of the superoperator matrix.

    Zero exactly for maps ``rho -> Z tr(X rho)``; invariant under positive
    scaling. Accepts an :class:`OutcomeMap` or a superoperator matrix.
    """
    s = np.linalg.svd(_rep_of(phi), compute_uv=False)
    if s[0] == 0 or not np.isfinite(s[0]):
        raise ZeroMap("map is zero")
    return float(s[1] / s[0]) if len(s) > 1 else 0.0


def _psd_from_vector(v: np.ndarray, dim: int) -> np.ndarray:
    """Fix the phase of a singular vector so its matrix has positive trace, then project to PSD."""
    x = unvec(v, dim)
    tr = np.trace(x)
    if abs(tr) > 1e-300:
        x = x * (abs(tr) / tr)
    w, u = np.linalg.eigh(hermitize(x))
    if w.sum() < 0:
        w = -w
    w = np.clip(w, 0.0, None)
    out = (u * w) @ dag(u)
    return out / max(w.sum(), 1e-300)


@dataclass
class ContCertificate:
    """Outcome of a contractivity search.

    ``word`` is the best word found (labels), ``defect`` its rank-one
    defect. ``Z_est`` and ``X_est`` are PSD with unit trace norm and
    ``reconstruction_error`` is the spectral-norm distance between the
    word's superoperator (scaled to unit spectral norm) and
    ``vec(Z) vec(X)^dagger`` built from the normalized estimates.
    """

    certified: bool
    word: list
    defect: float
    Z_est: Optional[np.ndarray] = None
    X_est: Optional[np.ndarray] = None
    top_singular: float = 1.0
    reconstruction_error: Optional[float] = None
    defect_trace: list = field(default_factory=list)
    method: str = ""
    reason: str = ""

    def __bool__(self):
        return self.certified

    @property
    def length(self) -> int:
        return len(self.word)


def _certificate(rep, word, defect_trace, dim, certified, method, reason="") -> ContCertificate:
    u, s, vh = np.linalg.svd(rep)
    m = rep / s[0]
    z = _psd_from_vector(u[:, 0], dim)
    x = _psd_from_vector(vh[0].conj(), dim)
    zv = z.reshape(-1) / np.linalg.norm(z)
    xv = x.reshape(-1) / np.linalg.norm(x)
    err = op_norm(m - np.outer(zv, xv.conj()))
    return ContCertificate(
        certified=certified,
        word=list(word),
        defect=float(s[1] / s[0]),
        Z_est=z,
        X_est=x,
        top_singular=1.0,
        reconstruction_error=float(err),
        defect_trace=list(defect_trace),
        method=method,
        reason=reason,
    )


def certify_primitive_word(instr: Instrument, word, n_max: int = 500, tol: Optional[float] = None,
                           primitivity_n_max: Optional[int] = None) -> ContCertificate:
    """Power a primitive word map until its normalized powers are rank one within ``tol``.

    If ``compose_word(instr, word)`` is not certified primitive (see
    :func:`qtraj.channel.is_primitive_map`), the result is not certified.
    Otherwise ``T^n / ||T^n||`` is tracked for ``n = 1..n_max`` and the
    first power with defect ``<= tol`` (default ``tol_cont``) is returned.
    The certificate's word is the ``n``-fold concatenation of ``word``.
    """
    tol = get_tolerances().tol_cont if tol is None else tol
    word = list(word)
    t = compose_word(instr, word)
    if primitivity_index(t, primitivity_n_max) is None:
        return ContCertificate(False, word, 1.0, method="primitive-word",
                               reason="word map not certified primitive")
    r = t.rep
    m = r / op_norm(r)
    trace = []
    for n in range(1, n_max + 1):
        if n > 1:
            m = r @ m
            m = m / op_norm(m)
        dfc = rank_one_defect(m)
        trace.append((n * len(word), dfc))
        if dfc <= tol:
            return _certificate(m, word * n, trace, instr.dim, True, "primitive-word")
    cert = _certificate(m, word * n_max, trace, instr.dim, False, "primitive-word",
                        reason=f"defect {trace[-1][1]:.3e} > {tol:g} after {n_max} powers")
    return cert


def _trajectory_search(instr, rho_probe, max_len, tol, rng):
    upd = _Updater(instr)
    reps = [o.rep for o in instr.outcomes]
    rho = project_state(rho_probe)
    m = None
    best = (np.inf, 0, None)
    trace = []
    word = []
    u = rng.random(max_len)
    for k in range(max_len):
        p = _clipped_probabilities(upd, rho)
        i = _choose(p, u[k])
        rho = project_state(upd.update(i, rho))
        word.append(instr.labels[i])
        m = reps[i] if m is None else reps[i] @ m
        nrm = op_norm(m)
        if nrm == 0:
            break
        m = m / nrm
        dfc = rank_one_defect(m)
        trace.append((k + 1, dfc))
        if dfc < best[0]:
            best = (dfc, k + 1, m)
        if dfc <= tol:
            break
    return best, word, trace


def _beam_search(instr, width, depth, tol):
    reps = [o.rep for o in instr.outcomes]
    beam = [((), None)]
    best = (np.inf, (), None)
    for _ in range(depth):
        cand = []
        for w, m in beam:
            for i, r in enumerate(reps):
                nm = r if m is None else r @ m
                nrm = op_norm(nm)
                if nrm == 0:
                    continue
                nm = nm / nrm
                cand.append((rank_one_defect(nm), w + (i,), nm))
        if not cand:
            break
        cand.sort(key=lambda c: c[0])
        if cand[0][0] < best[0]:
            best = cand[0]
        if best[0] <= tol:
            break
        beam = [(w, m) for _, w, m in cand[:width]]
    return best


def search_contractive_sequence(instr: Instrument, rho_probe: np.ndarray, max_len: int = 2000,
                                tol: Optional[float] = None, seed: Optional[int] = None,
                                beam_width: int = 8, beam_depth: int = 12) -> ContCertificate:
    """Look for a word whose normalized map is rank one within ``tol``.

    Two strategies, keeping the better result: the running product of
    superoperators along one trajectory of length ``max_len`` sampled from
    ``rho_probe`` (stopping early once ``tol`` is reached), and a beam search
    over words up to ``beam_depth`` letters ranked by defect.
    """
    tol = get_tolerances().tol_cont if tol is None else tol
    rng = np.random.default_rng(seed)
    (t_def, t_len, t_rep), t_word, trace = _trajectory_search(instr, rho_probe, max_len, tol, rng)
    b_def, b_word, b_rep = _beam_search(instr, beam_width, beam_depth, tol)
    if t_rep is None and b_rep is None:
        return ContCertificate(False, [], 1.0, method="search", reason="all word maps vanish")
    use_beam = b_rep is not None and (
        t_rep is None
        or b_def < t_def
        or (b_def <= tol and t_def <= tol and len(b_word) < t_len)
    )
    if use_beam:
        word = [instr.labels[i] for i in b_word]
        rep, method = b_rep, "beam"
    else:
        word = t_word[:t_len]
        rep, method = t_rep, "trajectory"
    dfc = min(t_def, b_def)
    certified = dfc <= tol
    reason = "" if certified else f"best defect {dfc:.3e} > {tol:g}"
    return _certificate(rep, word, trace, instr.dim, certified, method, reason)


@dataclass
class DarkSubspaceReport:
    """Result of :func:`nd_falsifier`.

    ``candidates`` holds ``(dim, basis)`` for each sampled subspace on which
    no word of length ``<= max_word_len`` broke the scaled-isometry
    equality. An empty list is evidence for non-darkness, never proof.
    """

    n_sampled: dict
    candidates: list
    violating_lengths: list
    max_word_len: int

    @property
    def n_candidates(self) -> int:
        return len(self.candidates)

    def summary(self) -> dict:
        lengths = self.violating_lengths
        return {
            "n_sampled": dict(self.n_sampled),
            "n_candidates": self.n_candidates,
            "candidate_dims": [k for k, _ in self.candidates],
            "max_word_len": self.max_word_len,
            "mean_violating_length": float(np.mean(lengths)) if lengths else None,
            "max_violating_length": int(max(lengths)) if lengths else None,
        }


def violates_isometry(word_op: np.ndarray, basis: np.ndarray, tol: float) -> bool:
    """Whether ``W`` fails to act as a scaled isometry on the span of ``basis``.

    Compares ``Q^dagger W^dagger W Q`` with ``||W Q||^2 Id`` relative to
    ``||W Q||^2``; ``W Q = 0`` counts as no violation.
    """
    wq = word_op @ basis
    g = dag(wq) @ wq
    s = op_norm(wq) ** 2
    if s <= 1e-300:
        return False
    return op_norm(g - s * np.eye(basis.shape[1])) > tol * s


def first_violating_word(perfect_ops, basis, max_word_len, tol):
    """Breadth-first search for a word breaking the equality on a subspace; ``None`` if none."""
    ops = np.asarray(perfect_ops)
    frontier = [((), basis.astype(complex))]
    for _ in range(max_word_len):
        nxt = []
        for w, q in frontier:
            for i, v in enumerate(ops):
                if violates_isometry(v, q, tol):
                    return w + (i,)
                nxt.append((w + (i,), v @ q))
        frontier = nxt
    return None


def nd_falsifier(perfect_ops, n_subspaces: int = 50, max_word_len: int = 6, seed: Optional[int] = None,
                 tol: Optional[float] = None) -> DarkSubspaceReport:
    """Randomized search for dark subspaces of a perfect unraveling ``{V_j}``.

    For each dimension ``k = 2..d``, samples ``n_subspaces`` Haar-random
    ``k``-dimensional subspaces and enumerates words up to ``max_word_len``
    looking for one that does not act as a scaled isometry there. Subspaces
    where none is found are reported as dark candidates.
    """
    tol = get_tolerances().tol_nd if tol is None else tol
    ops = np.asarray([as_matrix(v) for v in perfect_ops])
    d = ops.shape[1]
    residual = op_norm(np.einsum("kba,kbc->ac", ops.conj(), ops) - np.eye(d))
    if residual > get_tolerances().tol_tp:
        raise NotUnraveling(f"sum V^dagger V differs from identity by {residual:.3e}")
    rng = np.random.default_rng(seed)
    sampled = {}
    candidates = []
    lengths = []
    for k in range(2, d + 1):
        sampled[k] = n_subspaces
        for _ in range(n_subspaces):
            q = haar_subspace(rng, d, k)
            w = first_violating_word(ops, q, max_word_len, tol)
            if w is None:
                candidates.append((k, q))
            else:
                lengths.append(len(w))
    return DarkSubspaceReport(sampled, candidates, lengths, max_word_len)


def word_maps_up_to(instr: Instrument, length: int):
    """Yield ``(word, OutcomeMap)`` for all words of length ``1..length``."""
    for n in range(1, length + 1):
        for w in itertools.product(instr.labels, repeat=n):
            yield list(w), compose_word(instr, list(w))
