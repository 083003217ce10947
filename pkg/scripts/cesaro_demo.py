"""Plain versus period-averaged iterates of an irreducible channel.

For a periodic channel the plain iterates keep cycling while the averages
over one period converge to the invariant state; for the aperiodic rotated
qubit both converge, at the rate of the second eigenvalue.

    python scripts/cesaro_demo.py
"""

import numpy as np

from qtraj.channel import certify, cesaro_iterate, invariant_state
from qtraj.fixtures import cycle, rotated_biased_qubit
from qtraj.instrument import apply, total_channel
from qtraj.linalg import trace_norm
from qtraj.rand import random_state


def trace(name, ch, rho, ns):
    cert = certify(ch)
    rho_inv = invariant_state(ch)
    ev = np.sort(np.abs(np.linalg.eigvals(ch.rep)))[::-1]
    print(f"{name}: period {cert.period}, |lambda_2| = {ev[cert.period] if len(ev) > cert.period else 0:.4f}")
    print(f"{'n':>5} {'plain':>10} {'averaged':>10}")
    for n in ns:
        x = rho
        for _ in range(cert.period * n):
            x = apply(ch, x)
        avg = cesaro_iterate(ch, rho, cert.period, n)
        print(f"{n:5d} {trace_norm(x - rho_inv):10.2e} {trace_norm(avg - rho_inv):10.2e}")
    print()


def main():
    rng = np.random.default_rng(0)
    trace("cycle(3)", total_channel(cycle(3)), random_state(rng, 3), [0, 1, 5])
    trace("rotated qubit", total_channel(rotated_biased_qubit()), np.diag([1.0, 0.0]).astype(complex),
          [0, 50, 100, 200, 400, 500])


if __name__ == "__main__":
    main()
