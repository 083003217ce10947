"""Global numerical tolerances.

Every routine reads the active :class:`Tolerances` at call time, so a
``with tolerances(tol_psd=1e-7): ...`` block changes behaviour everywhere.
"""

from __future__ import annotations

import contextlib
import dataclasses
from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    # density-matrix validation
    tol_herm: float = 1e-9
    tol_tr: float = 1e-9
    tol_psd: float = 1e-9
    tol_sqrt: float = 1e-8
    # instruments
    tol_tp: float = 1e-9
    tol_stoch: float = 1e-12
    # channel spectra
    tol_fix: float = 1e-8
    tol_peri: float = 1e-6
    tol_rank: float = 1e-8
    # contractivity
    tol_cont: float = 1e-6
    tol_nd: float = 1e-9
    # trajectories
    tol_filter: float = 1e-12
    tol_prob: float = 1e-14

    def as_dict(self) -> dict[str, float]:
        return dataclasses.asdict(self)


_active = Tolerances()


def get_tolerances() -> Tolerances:
    return _active


def set_tolerances(**overrides: float) -> Tolerances:
    """Replace the active tolerances; returns the previous set."""
    global _active
    previous = _active
    _active = dataclasses.replace(_active, **overrides)
    return previous


@contextlib.contextmanager
def tolerances(**overrides: float):
    previous = set_tolerances(**overrides)
    try:
        yield _active
    finally:
        set_tolerances(**previous.as_dict())
