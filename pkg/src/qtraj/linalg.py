"""Dense linear algebra on d x d complex operators.

States are plain ``numpy`` arrays of shape ``(d, d)``; nothing here wraps
them in a class. Superoperators act on row-major (C order) vectorizations:
``vec(X) = X.reshape(-1)``, under which ``X -> A X B`` has matrix
``kron(A, B.T)`` and ``X -> A X A^dagger`` has matrix ``kron(A, A.conj())``.
"""

from __future__ import annotations

import numpy as np

from qtraj.config import get_tolerances
from qtraj.errors import DimensionMismatch, InvalidState, NotPSD


def dag(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + dag(m))


def vec(m: np.ndarray) -> np.ndarray:
    return np.asarray(m).reshape(-1)


def unvec(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if dim is None:
        dim = int(round(np.sqrt(v.size)))
    if dim * dim != v.size:
        raise DimensionMismatch(f"vector of length {v.size} is not a vectorized square matrix")
    return v.reshape(dim, dim)


def as_matrix(m, dim: int | None = None) -> np.ndarray:
    """Coerce to a square complex array, optionally checking its size."""
    arr = np.asarray(m, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise DimensionMismatch(f"expected a square matrix, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {arr.shape[0]}")
    return arr


def trace_norm(m: np.ndarray) -> float:
    """Sum of singular values."""
    m = np.asarray(m)
    if m.size == 0:
        return 0.0
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))


def op_norm(m: np.ndarray) -> float:
    """Largest singular value."""
    m = np.asarray(m)
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def hermitian_trace_norm(m: np.ndarray) -> float:
    """Trace norm of a Hermitian matrix via its eigenvalues (cheaper than SVD)."""
    return float(np.sum(np.abs(np.linalg.eigvalsh(hermitize(np.asarray(m))))))


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Principal square root of a Hermitian PSD matrix.

    Eigenvalues in ``[-tol_psd, 0)`` are clamped to zero first; anything
    more negative raises :class:`NotPSD`.
    """
    tol = get_tolerances()
    m = as_matrix(m)
    if op_norm(m - dag(m)) > tol.tol_herm * max(1.0, op_norm(m)):
        raise NotPSD("matrix is not Hermitian")
    w, v = np.linalg.eigh(hermitize(m))
    if w[0] < -tol.tol_psd:
        raise NotPSD(f"smallest eigenvalue {w[0]:.3e} below -{tol.tol_psd:g}")
    w = np.sqrt(np.clip(w, 0.0, None))
    return (v * w) @ dag(v)


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``.

    Evaluated as the squared trace norm of ``sqrt(rho) sqrt(sigma)``, which
    has the same singular values in either argument order and is therefore
    symmetric up to rounding. Clamped into [0, 1].
    """
    r = psd_sqrt(rho)
    s = psd_sqrt(sigma)
    if r.shape != s.shape:
        raise DimensionMismatch(f"shapes {r.shape} and {s.shape} differ")
    f = trace_norm(r @ s) ** 2
    return float(min(1.0, max(0.0, f)))


def state_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Fidelity of two states already known to be valid; no input checks.

    Qubits use the closed form ``tr(rho sigma) + 2 sqrt(det rho det sigma)``.
    """
    if rho.shape == (2, 2):
        det_r = max(0.0, (rho[0, 0] * rho[1, 1]).real - abs(rho[0, 1]) ** 2)
        det_s = max(0.0, (sigma[0, 0] * sigma[1, 1]).real - abs(sigma[0, 1]) ** 2)
        f = np.real(np.sum(rho * sigma.T)) + 2.0 * np.sqrt(det_r * det_s)
        return float(min(1.0, max(0.0, f)))
    out = []
    for x in (rho, sigma):
        w, v = np.linalg.eigh(x)
        out.append((v * np.sqrt(np.clip(w, 0.0, None))) @ dag(v))
    f = float(np.sum(np.linalg.svd(out[0] @ out[1], compute_uv=False)) ** 2)
    return min(1.0, max(0.0, f))


def check_density_matrix(rho, dim: int | None = None) -> np.ndarray:
    """Validate a density matrix against the active tolerances and return it."""
    tol = get_tolerances()
    rho = as_matrix(rho, dim)
    herm_err = op_norm(rho - dag(rho))
    if herm_err > tol.tol_herm:
        raise InvalidState(f"not Hermitian (residual {herm_err:.3e})")
    tr = np.trace(rho)
    if abs(tr - 1.0) > tol.tol_tr:
        raise InvalidState(f"trace {tr.real:.12g} differs from 1")
    lo = np.linalg.eigvalsh(hermitize(rho))[0]
    if lo < -tol.tol_psd:
        raise NotPSD(f"smallest eigenvalue {lo:.3e} below -{tol.tol_psd:g}")
    return rho


def is_density_matrix(rho, dim: int | None = None) -> bool:
    try:
        check_density_matrix(rho, dim)
    except (InvalidState, DimensionMismatch):
        return False
    return True


def project_state(m: np.ndarray) -> np.ndarray:
    """Hermitize, clamp slightly negative eigenvalues to zero and renormalize.

    Meant for states that are valid up to floating-point drift, e.g. after a
    Kraus update. Raises :class:`NotPSD` if the drift exceeds ``tol_psd``
    relative to the trace.
    """
    h = hermitize(np.asarray(m, dtype=complex))
    tr = np.trace(h).real
    if tr <= 0:
        raise InvalidState(f"non-positive trace {tr:.3e}")
    h = h / tr
    if h.shape == (2, 2):
        # unit trace: PSD iff det >= 0
        det = (h[0, 0] * h[1, 1]).real - abs(h[0, 1]) ** 2
        if det >= 0:
            return h
        w = [0.5 - np.sqrt(0.25 - det)]
    else:
        w = np.linalg.eigvalsh(h)
    if w[0] >= 0:
        return h
    if w[0] < -get_tolerances().tol_psd:
        raise NotPSD(f"smallest eigenvalue {w[0]:.3e} below -tol_psd")
    w, v = np.linalg.eigh(h)
    w = np.clip(w, 0.0, None)
    out = (v * w) @ dag(v)
    return out / np.trace(out).real


def pure_state(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def maximally_mixed(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex) / dim
