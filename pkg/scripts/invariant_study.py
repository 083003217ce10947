"""Invariant measure of the rotated qubit: sampling noise versus exact pushes.

Prints the W1 distance between independent sampled replicas as the sample
size grows, the distance from each replica to its own one-step push, and
how fast exact pushes of a point mass approach a large sample.

    python scripts/invariant_study.py
"""

import argparse
from dataclasses import dataclass

import numpy as np

from qtraj.ergodic import EmpiricalMeasure, kernel_push, kernel_push_n, sample_invariant, wasserstein1
from qtraj.fixtures import rotated_biased_qubit


@dataclass
class Config:
    sizes: tuple = (250, 500, 1000, 2000)
    push_steps: tuple = (2, 4, 6, 8, 10)
    burn_in: int = 1000
    thin: int = 10
    seed: int = 0


def study(cfg: Config):
    instr = rotated_biased_qubit()
    ket0 = np.diag([1.0, 0.0]).astype(complex)
    mixed = np.eye(2, dtype=complex) / 2
    print(f"{'atoms':>6} {'W1(a,b)':>9} {'W1(a,aP)':>9} {'W1(b,bP)':>9}")
    for n in cfg.sizes:
        a = sample_invariant(instr, ket0, cfg.burn_in, n, cfg.thin, seed=cfg.seed)
        b = sample_invariant(instr, mixed, cfg.burn_in, n, cfg.thin, seed=cfg.seed + 1)
        print(f"{n:6d} {wasserstein1(a, b):9.4f} {wasserstein1(a, kernel_push(instr, a), cap=2 * n):9.4f} "
              f"{wasserstein1(b, kernel_push(instr, b), cap=2 * n):9.4f}")

    ref = sample_invariant(instr, ket0, cfg.burn_in, max(cfg.sizes), cfg.thin, seed=cfg.seed + 2)
    print(f"\n{'pushes':>6} {'atoms':>6} {'W1 to sample':>13}")
    for k in cfg.push_steps:
        mu = kernel_push_n(instr, EmpiricalMeasure.point_mass(ket0), k)
        print(f"{k:6d} {len(mu):6d} {wasserstein1(mu, ref, cap=max(len(mu), len(ref))):13.4f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=Config.seed)
    args = ap.parse_args()
    study(Config(seed=args.seed))


if __name__ == "__main__":
    main()
