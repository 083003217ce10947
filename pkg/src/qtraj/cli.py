"""Command-line entry point: ``qtraj {validate,analyze,simulate,contractivity,invariant}``.

Instruments are given as a JSON file (see :mod:`qtraj.io`) or as
``fixture:NAME`` for the built-in fixtures. States are given as
``mixed``, ``basis:k``, ``diag:p0,p1,...`` or ``pure:a0,a1,...``.

Exit codes: 0 success, 1 validation failure (bad file, bad instrument,
unknown label, filter start violating the kernel condition,
bad state), 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from qtraj import __version__
from qtraj.config import Tolerances, get_tolerances, tolerances
from qtraj.errors import (
    DimensionMismatch,
    FilterCollapse,
    InvalidState,
    KernelConditionViolated,
    NotStochastic,
    NotTracePreserving,
    ParseError,
    QTrajError,
    UnknownLabel,
)
from qtraj.fixtures import FIXTURES
from qtraj.instrument import Instrument
from qtraj.io import fmt, instrument_hash, load_instrument, metadata_line, write_csv
from qtraj.linalg import check_density_matrix, maximally_mixed, pure_state
from qtraj.trajectory import RNG_ALGORITHM

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
VALIDATION_ERRORS = (ParseError, NotTracePreserving, NotStochastic, DimensionMismatch, InvalidState,
                     KernelConditionViolated, UnknownLabel, OSError, json.JSONDecodeError)


class ConfigError(ValueError):
    """Bad command-line value (state spec, seed range, ...)."""


@dataclass
class RunConfig:
    command: str
    instrument: str
    out: Optional[Path] = None
    seed: int = 0
    seeds: tuple = (0, 0)
    steps: int = 500
    burn_in: int = 1000
    thin: int = 10
    jobs: int = 1
    tolerances: dict = field(default_factory=dict)
    timestamp: bool = True
    plot_data: bool = True
    extra: dict = field(default_factory=dict)


# -- parsing helpers -----------------------------------------------------------

def parse_seed_range(text: str) -> tuple:
    """``"A..B"`` (inclusive) or a single integer."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
        else:
            lo = hi = int(text)
    except ValueError:
        raise ConfigError(f"bad seed range {text!r}; expected A..B") from None
    if hi < lo:
        raise ConfigError(f"empty seed range {text!r}")
    return lo, hi


def _numbers(text):
    try:
        return [complex(t.replace("i", "j")) for t in text.split(",")]
    except ValueError:
        raise ConfigError(f"bad number list {text!r}") from None


def parse_state(spec: str, dim: int) -> np.ndarray:
    kind, _, arg = spec.partition(":")
    if kind == "mixed":
        return maximally_mixed(dim)
    if kind == "basis":
        try:
            k = int(arg)
        except ValueError:
            raise ConfigError(f"bad basis index in {spec!r}") from None
        if not 0 <= k < dim:
            raise ConfigError(f"basis index {k} out of range for dimension {dim}")
        rho = np.zeros((dim, dim), dtype=complex)
        rho[k, k] = 1.0
        return rho
    if kind == "diag":
        p = np.real(_numbers(arg))
        if len(p) != dim:
            raise ConfigError(f"{spec!r} has {len(p)} entries, dimension is {dim}")
        rho = np.diag(p).astype(complex)
    elif kind == "pure":
        a = np.asarray(_numbers(arg))
        if len(a) != dim or not np.any(a):
            raise ConfigError(f"{spec!r} must have {dim} entries, not all zero")
        rho = pure_state(a)
    else:
        raise ConfigError(f"unknown state spec {spec!r}; use mixed, basis:k, diag:..., pure:...")
    try:
        return check_density_matrix(rho, dim)
    except InvalidState as exc:
        raise ConfigError(f"{spec!r}: {exc}") from None


def resolve_instrument(ref: str) -> Instrument:
    if ref.startswith("fixture:"):
        name = ref.split(":", 1)[1]
        if name not in FIXTURES:
            raise ConfigError(f"unknown fixture {name!r}; choose from {', '.join(sorted(FIXTURES))}")
        return FIXTURES[name]()
    return load_instrument(ref)


def matrix_block(name: str, m: np.ndarray) -> str:
    """Plain-text matrix: a ``[name]`` line, then one row per line of ``re,im`` pairs."""
    lines = [f"[{name}] {m.shape[0]}x{m.shape[1]}"]
    for row in np.asarray(m):
        lines.append(" ".join(f"{fmt(z.real)},{fmt(z.imag)}" for z in row))
    return "\n".join(lines)


def _meta(cfg: RunConfig, instr: Instrument, **extra) -> dict:
    meta = {"tool": f"qtraj-{__version__}", "command": cfg.command}
    meta.update(extra)
    meta["rng"] = RNG_ALGORITHM
    meta["instrument_sha256"] = instrument_hash(instr)
    meta.update({k: repr(v) for k, v in cfg.tolerances.items()})
    if cfg.timestamp:
        meta["timestamp"] = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return meta


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x]
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _emit(report: dict, cfg: RunConfig, name: str):
    text = json.dumps(_jsonable(report), indent=1)
    print(text)
    if cfg.out is not None:
        (cfg.out / name).write_text(text + "\n")


# -- subcommands -----------------------------------------------------------------

def cmd_validate(cfg: RunConfig) -> int:
    instr = resolve_instrument(cfg.instrument)
    report = {
        "status": "ok",
        "dim": instr.dim,
        "outcomes": [str(lab) for lab in instr.labels],
        "kraus_counts": [o.n_kraus for o in instr.outcomes],
        "tp_residual": instr.tp_residual(),
        "instrument_sha256": instrument_hash(instr),
        "tolerances": cfg.tolerances,
    }
    _emit(report, cfg, "validate.json")
    return EXIT_OK


def cmd_analyze(cfg: RunConfig) -> int:
    from qtraj.channel import certify

    instr = resolve_instrument(cfg.instrument)
    cert = certify(instr)
    report = {"instrument_sha256": instrument_hash(instr), **cert.as_dict(), "tolerances": cfg.tolerances}
    _emit(report, cfg, "certificate.json")
    return EXIT_OK


def _simulate_one(job):
    instr, rho0, rho_hat0, steps, seed, tol = job
    from qtraj.trajectory import run_pair

    with tolerances(**tol):
        try:
            rec = run_pair(instr, rho0, rho_hat0, steps, seed=seed)
        except FilterCollapse as exc:
            return seed, None, {"step": exc.step, "label": str(exc.label), "mass": exc.mass, "message": str(exc)}
    return seed, rec, None


def cmd_simulate(cfg: RunConfig) -> int:
    instr = resolve_instrument(cfg.instrument)
    rho0 = parse_state(cfg.extra["rho0"], instr.dim)
    rho_hat0 = parse_state(cfg.extra["rho_hat0"], instr.dim)
    lo, hi = cfg.seeds
    jobs = [(instr, rho0, rho_hat0, cfg.steps, s, cfg.tolerances) for s in range(lo, hi + 1)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_simulate_one, jobs, chunksize=max(1, len(jobs) // (4 * cfg.jobs))))
    else:
        results = [_simulate_one(j) for j in jobs]

    # single collector: all files are written here, in seed order
    finals, collapsed, curves = [], [], []
    for seed, rec, failure in results:
        if failure is not None:
            collapsed.append({"seed": seed, **failure})
            continue
        finals.append(rec.final_fidelity)
        curves.append(rec.fidelities)
        if cfg.out is not None:
            rows = [(0, "", fmt(rec.fidelities[0]), fmt(0.0))]
            rows += [(k, rec.word[k - 1], fmt(rec.fidelities[k]), fmt(rec.log_likelihoods[k]))
                     for k in range(1, rec.steps + 1)]
            write_csv(cfg.out / f"run_{seed}.csv", ["step", "outcome", "fidelity", "log_likelihood"], rows,
                      _meta(cfg, instr, seed=seed, rho0=cfg.extra["rho0"], rho_hat0=cfg.extra["rho_hat0"]))
    if cfg.out is not None and cfg.plot_data and curves:
        c = np.array(curves)
        q = np.quantile(c, [0.1, 0.5, 0.9], axis=0)
        rows = [(k, fmt(q[0, k]), fmt(q[1, k]), fmt(q[2, k]), fmt(c[:, k].mean()))
                for k in range(c.shape[1])]
        write_csv(cfg.out / "aggregate.csv", ["step", "q10", "median", "q90", "mean"], rows,
                  _meta(cfg, instr, seeds=f"{lo}..{hi}", runs=len(curves)))
    if cfg.out is not None and collapsed:
        write_csv(cfg.out / "collapsed.csv", ["seed", "step", "label", "mass"],
                  [(f["seed"], f["step"], f["label"], fmt(f["mass"])) for f in collapsed],
                  _meta(cfg, instr, seeds=f"{lo}..{hi}"))
    summary = {
        "runs": hi - lo + 1,
        "completed": len(finals),
        "collapsed": [f["seed"] for f in collapsed],
        "final_fidelity": None if not finals else {
            "median": float(np.median(finals)),
            "q10": float(np.quantile(finals, 0.1)),
            "q90": float(np.quantile(finals, 0.9)),
            "min": float(np.min(finals)),
        },
        "tolerances": cfg.tolerances,
    }
    _emit(summary, cfg, "summary.json")
    return EXIT_OK


def _perfect_ops(instr: Instrument):
    if instr.source is not None:
        return list(instr.source["perfect_ops"])
    ops = []
    for o in instr.outcomes:
        if o.kraus is None:
            raise ConfigError(f"outcome {o.label!r} has no Kraus form")
        ops.extend(o.kraus)
    return ops


def cmd_contractivity(cfg: RunConfig) -> int:
    from qtraj.contractivity import certify_primitive_word, nd_falsifier, search_contractive_sequence

    x = cfg.extra
    instr = resolve_instrument(cfg.instrument)
    if x["word"]:
        word = [instr.labels[instr.index(t)] for t in x["word"].split(",")]
        cert = certify_primitive_word(instr, word, n_max=x["n_max"])
    else:
        probe = parse_state(x["rho_probe"], instr.dim)
        cert = search_contractive_sequence(instr, probe, max_len=x["max_len"], seed=cfg.seed,
                                           beam_width=x["beam_width"], beam_depth=x["beam_depth"])
    report = {
        "certified": cert.certified,
        "method": cert.method,
        "reason": cert.reason,
        "word_length": cert.length,
        "word": ",".join(str(w) for w in cert.word),
        "defect": cert.defect,
        "reconstruction_error": cert.reconstruction_error,
        "seed": cfg.seed,
        "instrument_sha256": instrument_hash(instr),
        "tolerances": cfg.tolerances,
    }
    if x["nd"]:
        nd = nd_falsifier(_perfect_ops(instr), n_subspaces=x["nd_subspaces"], max_word_len=x["nd_word_len"],
                          seed=cfg.seed)
        report["non_darkness"] = nd.summary()
    _emit(report, cfg, "contractivity.json")
    if cfg.out is not None:
        write_csv(cfg.out / "defect_trace.csv", ["length", "defect"],
                  [(n, fmt(dfc)) for n, dfc in cert.defect_trace], _meta(cfg, instr, seed=cfg.seed))
        if cert.Z_est is not None:
            blocks = [metadata_line(**_meta(cfg, instr, seed=cfg.seed)),
                      matrix_block("Z_est", cert.Z_est), matrix_block("X_est", cert.X_est)]
            (cfg.out / "estimates.txt").write_text("\n".join(blocks) + "\n")
    return EXIT_OK


def _log_grid(n: int, points: int = 60) -> list:
    return sorted(set(int(round(v)) for v in np.geomspace(1, n, points)))


def cmd_invariant(cfg: RunConfig) -> int:
    from qtraj.ergodic import (
        FUNCTIONALS,
        ergodic_mean,
        kernel_push,
        linear,
        sample_invariant,
        wasserstein1_subsampled,
    )

    x = cfg.extra
    instr = resolve_instrument(cfg.instrument)
    d = instr.dim
    starts = x["rho0"] or ["basis:0", "mixed"]
    states = [parse_state(s, d) for s in starts]
    gs = []
    for name in x["functional"] or ["purity", "proj:0"]:
        if name in FUNCTIONALS:
            gs.append(FUNCTIONALS[name])
        elif name.startswith("proj:"):
            k = int(name.split(":", 1)[1])
            a = np.zeros((d, d), dtype=complex)
            a[k, k] = 1.0
            gs.append(linear(a, name=name))
        else:
            raise ConfigError(f"unknown functional {name!r}; use {', '.join(FUNCTIONALS)} or proj:k")

    replicas = []
    for r, rho0 in enumerate(states):
        mu = sample_invariant(instr, rho0, burn_in=cfg.burn_in, n_samples=x["samples"], thinning=cfg.thin,
                              seed=cfg.seed + r)
        replicas.append(mu)
        if cfg.out is not None:
            header = [f"{part}_{a}{b}" for a in range(d) for b in range(d) for part in ("re", "im")] + ["weight"]
            rows = []
            for s, w in zip(mu.states, mu.weights):
                flat = s.reshape(-1)
                rows.append([v for z in flat for v in (fmt(z.real), fmt(z.imag))] + [fmt(w)])
            write_csv(cfg.out / f"atoms_{r}.csv", header, rows,
                      _meta(cfg, instr, seed=cfg.seed + r, rho0=starts[r], burn_in=cfg.burn_in, thin=cfg.thin))

    cap = x["w1_cap"]
    w1 = {"pairs": [], "push": []}
    for a in range(len(replicas)):
        for b in range(a + 1, len(replicas)):
            val, spread = wasserstein1_subsampled(replicas[a], replicas[b], cap=cap, seed=cfg.seed)
            w1["pairs"].append({"a": starts[a], "b": starts[b], "w1": val, "spread": spread})
    for r, mu in enumerate(replicas):
        val, spread = wasserstein1_subsampled(mu, kernel_push(instr, mu), cap=cap, seed=cfg.seed)
        w1["push"].append({"replica": starts[r], "w1_to_push": val, "spread": spread})

    erg = []
    n = x["ergodic_steps"]
    if n > 0:
        grid = _log_grid(n)
        for r, rho0 in enumerate(states):
            means, trace = ergodic_mean(instr, rho0, gs, n, seed=cfg.seed + r, checkpoints=grid)
            erg.append({"rho0": starts[r], "means": {g.name: float(v) for g, v in zip(gs, means)}})
            if cfg.out is not None and cfg.plot_data:
                write_csv(cfg.out / f"ergodic_{r}.csv", ["n"] + [g.name for g in gs],
                          [[c] + [fmt(v) for v in row] for c, row in zip(grid, trace)],
                          _meta(cfg, instr, seed=cfg.seed + r, rho0=starts[r]))
    report = {
        "instrument_sha256": instrument_hash(instr),
        "samples": x["samples"],
        "burn_in": cfg.burn_in,
        "thin": cfg.thin,
        "seed": cfg.seed,
        "w1": w1,
        "ergodic": erg,
        "tolerances": cfg.tolerances,
    }
    _emit(report, cfg, "invariant.json")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "contractivity": cmd_contractivity,
    "invariant": cmd_invariant,
}


# -- argument parser -------------------------------------------------------------

def _common(p: argparse.ArgumentParser):
    p.add_argument("instrument", help="instrument JSON file or fixture:NAME")
    p.add_argument("--out", metavar="DIR", default=None, help="directory for output files (created if missing)")
    p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp from output metadata")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    defaults = Tolerances()
    for f in fields(Tolerances):
        p.add_argument("--" + f.name.replace("_", "-"), type=float, default=getattr(defaults, f.name),
                       metavar="X", dest=f.name, help=f"tolerance {f.name}")


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    # flags and optional values have no default worth printing
    def _get_help_string(self, action):
        if action.default is None or action.default is False:
            return action.help
        return super()._get_help_string(action)


def build_parser() -> argparse.ArgumentParser:
    fmt_cls = _HelpFormatter
    parser = argparse.ArgumentParser(prog="qtraj", description="Quantum trajectories, filters and invariant measures.",
                                     formatter_class=fmt_cls)
    parser.add_argument("--version", action="version", version=f"qtraj {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check an instrument file", formatter_class=fmt_cls)
    _common(p)

    p = sub.add_parser("analyze", help="spectral certificate of the channel", formatter_class=fmt_cls)
    _common(p)

    p = sub.add_parser("simulate", help="true trajectory and mismatched filter over a seed range",
                       formatter_class=fmt_cls)
    _common(p)
    p.add_argument("--seeds", default="0..199", help="inclusive seed range A..B")
    p.add_argument("--steps", type=int, default=500, help="steps per run")
    p.add_argument("--rho0", default="basis:0", help="true initial state")
    p.add_argument("--rho-hat0", default="mixed", help="filter initial state")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--no-plot-data", action="store_true", help="skip the aggregate quantile CSV")

    p = sub.add_parser("contractivity", help="search for a rank-one word", formatter_class=fmt_cls)
    _common(p)
    p.add_argument("--word", default="", help="comma-separated primitive word to power (default: search)")
    p.add_argument("--n-max", type=int, default=500, help="maximum powers of --word")
    p.add_argument("--max-len", type=int, default=2000, help="trajectory search length")
    p.add_argument("--beam-width", type=int, default=8, help="beam search width")
    p.add_argument("--beam-depth", type=int, default=12, help="beam search depth")
    p.add_argument("--rho-probe", default="mixed", help="initial state of the trajectory search")
    p.add_argument("--nd", action="store_true", help="also run the dark-subspace falsifier")
    p.add_argument("--nd-subspaces", type=int, default=50, help="random subspaces per dimension")
    p.add_argument("--nd-word-len", type=int, default=6, help="maximum word length for the falsifier")

    p = sub.add_parser("invariant", help="sample the invariant measure and ergodic means", formatter_class=fmt_cls)
    _common(p)
    p.add_argument("--rho0", action="append", default=None,
                   help="initial state of a replica; repeat for several (default: basis:0 and mixed)")
    p.add_argument("--samples", type=int, default=2000, help="atoms per replica")
    p.add_argument("--burn-in", type=int, default=1000, help="steps discarded before sampling")
    p.add_argument("--thin", type=int, default=10, help="steps between kept atoms")
    p.add_argument("--w1-cap", type=int, default=4000, help="largest measure solved exactly; larger ones are resampled")
    p.add_argument("--ergodic-steps", type=int, default=20000, help="length of each ergodic-mean run (0 skips)")
    p.add_argument("--functional", action="append", default=None,
                   help="functional for the ergodic mean: purity, entropy, max_eigenvalue or proj:k "
                        "(repeatable; default: purity and proj:0)")
    p.add_argument("--no-plot-data", action="store_true", help="skip the ergodic trace CSVs")
    return parser


def config_from_args(args) -> RunConfig:
    tol = {f.name: getattr(args, f.name) for f in fields(Tolerances)}
    known = {"command", "instrument", "out", "no_timestamp", "seed", "seeds", "steps", "burn_in", "thin", "jobs",
             "no_plot_data", *tol}
    extra = {k: v for k, v in vars(args).items() if k not in known}
    return RunConfig(
        command=args.command,
        instrument=args.instrument,
        out=Path(args.out) if args.out else None,
        seed=args.seed,
        seeds=parse_seed_range(args.seeds) if getattr(args, "seeds", None) else (args.seed, args.seed),
        steps=getattr(args, "steps", 500),
        burn_in=getattr(args, "burn_in", 1000),
        thin=getattr(args, "thin", 10),
        jobs=max(1, getattr(args, "jobs", 1)),
        tolerances=tol,
        timestamp=not args.no_timestamp,
        plot_data=not getattr(args, "no_plot_data", False),
        extra=extra,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        with tolerances(**cfg.tolerances):
            if cfg.out is not None:
                cfg.out.mkdir(parents=True, exist_ok=True)
            return COMMANDS[cfg.command](cfg)
    except (ConfigError, *VALIDATION_ERRORS) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (QTrajError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
