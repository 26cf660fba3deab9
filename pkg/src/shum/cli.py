"""Command-line experiment driver.

Subcommands: ``verify-identities``, ``weights``, ``simulate``, ``control``,
``observability``, ``sweep`` and ``carleman``.  Settings come from an optional
flat ``key = value`` file (``--config``) and are overridden by flags.

Exit codes: 0 all asserted invariants hold, 1 an invariant failed,
2 invalid configuration, 3 a numerical guard tripped.
"""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager

import numpy as np

from .calculus import identity_suite
from .config import ConfigError, ExperimentConfig
from .hum import CertificateError, ConvergenceError, control_experiment, exponential_eps
from .mesh import Mesh, build_mesh
from .noise_tree import build_tree
from .observability import estimate_Cobs
from .solvers import CoefficientField, SchemeConfig, solve_backward, solve_forward
from .weights import (
    LHS_TERMS, RHS_TERMS, RegimeError, WeightOverflowError, WeightParams, build_psi,
    carleman_functionals, eval_weights, probe_from_backward,
)

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_GUARD = 0, 1, 2, 3

CONTROL_COLUMNS = ["N", "h", "K", "T", "C", "eps", "cg_iters", "terminal_ratio", "cost_ratio",
                   "certificate_residual"]
OBSERVABILITY_COLUMNS = ["N", "h", "K", "T", "H", "epsT", "quotient", "iters"]

# Reference probes for the Carleman table: terminal data as functions of (x, W_T).
CARLEMAN_PROBES = {
    "indicator": lambda x, W: ((x > 0.2) & (x < 0.6)) * (1.0 + 0.0 * W),
    "sine_linear_noise": lambda x, W: np.sin(np.pi * x) * (1.0 + W),
    "bump_sign": lambda x, W: 16.0 * x**2 * (1.0 - x) ** 2 * np.where(W >= 0, 1.0, -1.0),
    "cosine_exp_noise": lambda x, W: np.cos(3 * np.pi * x) * np.exp(W),
    "mixed_modes": lambda x, W: np.sin(2 * np.pi * x) + 0.3 * W * np.sin(5 * np.pi * x),
}


@contextmanager
def _open_output(path: str):
    if path in ("-", ""):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with _open_output(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _write_plot(path: str | None, columns: list[list[float]]) -> None:
    """Whitespace-separated columns for gnuplot/numpy.loadtxt."""
    if path:
        np.savetxt(path, np.column_stack(columns), fmt="%.17g")


def _scheme(cfg: ExperimentConfig, N: int | None = None, T: float | None = None) -> SchemeConfig:
    mesh = build_mesh(cfg.N if N is None else N)
    tree = build_tree(cfg.K, cfg.T if T is None else T)
    coeffs = CoefficientField.sample(cfg.coefficient("a1"), cfg.coefficient("a2"), mesh, tree)
    return SchemeConfig(mesh, tree, coeffs, cfg.G0)


def _weight_params(cfg: ExperimentConfig, T: float | None = None) -> WeightParams:
    return WeightParams(cfg.lam, cfg.mu, cfg.delta, cfg.T if T is None else T, build_psi(cfg.G2))


def _eps(cfg: ExperimentConfig, h: float) -> float:
    return exponential_eps(cfg.C)(h)


# --- subcommands ------------------------------------------------------------

def cmd_verify_identities(cfg: ExperimentConfig, args) -> int:
    report = identity_suite(Mesh(cfg.N), cfg.trials, cfg.seed)
    rows = [[name, r, r <= report.tol] for name, r in report.residuals.items()]
    _write_csv(cfg.output, ["identity", "max_scaled_residual", "passed"], rows)
    return EXIT_OK if report.passed else EXIT_INVARIANT


def cmd_weights(cfg: ExperimentConfig, args) -> int:
    params = _weight_params(cfg)
    mesh = Mesh(cfg.N)
    rows = []
    for t in np.linspace(0.0, cfg.T, cfg.K + 1):
        wf = eval_weights(float(t), params, mesh)
        rows += [[float(t), float(x), wf.theta, wf.s, float(p), float(r)]
                 for x, p, r in zip(wf.x, wf.phi, wf.r)]
    ok = all(r[2] >= cfg.T**-2 * (1 - 1e-14) and r[5] > 0 for r in rows)
    _write_csv(cfg.output, ["t", "x", "theta", "s", "phi", "r"], rows)
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    sc = _scheme(cfg)
    y0 = cfg.initial_state(sc.mesh.M.points)
    y = solve_forward(y0, None, sc)
    rows = []
    for k in range(sc.tree.K + 1):
        lvl = y[k]
        rows.append([k, float(sc.tree.times[k]), sc.leaf_inner(lvl, lvl),
                     sc.h * float(np.sum(np.mean(lvl, axis=0)))])
    _write_csv(cfg.output, ["k", "t", "mean_square_norm", "mean_integral"], rows)
    _write_plot(args.plot, [[r[1] for r in rows], [r[2] for r in rows]])
    return EXIT_OK if all(math.isfinite(r[2]) for r in rows) else EXIT_INVARIANT


def _control_row(cfg: ExperimentConfig, N: int, T: float) -> list:
    mesh, tree = build_mesh(N), build_tree(cfg.K, T)
    coeffs = CoefficientField.sample(cfg.coefficient("a1"), cfg.coefficient("a2"), mesh, tree)
    y0 = cfg.initial_state(mesh.M.points)
    eps = _eps(cfg, mesh.h)
    rep = control_experiment(y0, mesh, tree, coeffs, cfg.G0, eps, tol=cfg.tol,
                             max_iter=cfg.max_iter or None)
    return [N, mesh.h, cfg.K, T, cfg.C, eps, rep.cg_iterations, rep.terminal_ratio, rep.cost_ratio,
            rep.certificate_residual]


def cmd_control(cfg: ExperimentConfig, args) -> int:
    _write_csv(cfg.output, CONTROL_COLUMNS, [_control_row(cfg, cfg.N, cfg.T)])
    return EXIT_OK


def _sweep_point(cfg: ExperimentConfig, N: int, T: float):
    """Run one point; failures come back as ``(exit_code, message)`` so workers never raise."""
    try:
        return EXIT_OK, _control_row(cfg, N, T)
    except CertificateError as exc:
        return EXIT_INVARIANT, f"N={N} T={T}: {exc}"
    except (FloatingPointError, ConvergenceError, np.linalg.LinAlgError) as exc:
        return EXIT_GUARD, f"N={N} T={T}: {exc}"


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    points = [(N, T) for N in (cfg.sweep_N or [cfg.N]) for T in (cfg.sweep_T or [cfg.T])]
    workers = int(os.environ.get("SHUM_WORKERS", "1") or 1)
    if workers < 1:
        raise ConfigError(f"SHUM_WORKERS must be >= 1, got {workers}")
    if workers == 1:
        results = [_sweep_point(cfg, N, T) for N, T in points]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futures = [ex.submit(_sweep_point, cfg, N, T) for N, T in points]
            results = [f.result() for f in futures]
    rows = [r for code, r in results if code == EXIT_OK]
    _write_csv(cfg.output, CONTROL_COLUMNS, rows)
    _write_plot(args.plot, [[r[1] for r in rows], [r[3] for r in rows], [r[7] for r in rows],
                            [r[8] for r in rows]])
    codes = [code for code, _ in results]
    for code, msg in results:
        if code != EXIT_OK:
            print(f"error: {msg}", file=sys.stderr)
    return max(codes) if codes else EXIT_OK


def cmd_observability(cfg: ExperimentConfig, args) -> int:
    sc = _scheme(cfg)
    eps_T = _eps(cfg, sc.h)
    rep = estimate_Cobs(sc, eps_T, tol=args.power_tol, max_iter=args.power_iter, seed=cfg.seed)
    _write_csv(cfg.output, OBSERVABILITY_COLUMNS,
               [[cfg.N, sc.h, cfg.K, cfg.T, rep.H, eps_T, rep.quotient, rep.iterations]])
    return EXIT_OK if rep.converged else EXIT_INVARIANT


def cmd_carleman(cfg: ExperimentConfig, args) -> int:
    params = _weight_params(cfg)
    levels = [cfg.N, 2 * cfg.N + 1]  # h halves: 1/(N+1) -> 1/(2N+2)
    rows, ok = [], True
    for name, probe in CARLEMAN_PROBES.items():
        ratios = []
        for N in levels:
            sc = _scheme(cfg, N=N)
            W = sc.tree.brownian(sc.tree.K)[:, None]
            z, _, _ = solve_backward(probe(sc.mesh.M.points[None, :], W), sc)
            table = carleman_functionals(probe_from_backward(z, sc.biharmonic.matrix), params, sc.tree,
                                         sc.mesh, cfg.G0, cfg.lambda0, cfg.eps0, cfg.h0)
            vals = table.values
            ok &= all(math.isfinite(table.log_terms[k]) for k in LHS_TERMS)
            ratios.append(table.ratio)
            rows.append([name, N, sc.h] + [vals[k] for k in LHS_TERMS + RHS_TERMS] + [table.ratio])
        ok &= ratios[0] > 0 and ratios[1] <= 2.0 * ratios[0]
    _write_csv(cfg.output, ["probe", "N", "h", *LHS_TERMS, *RHS_TERMS, "ratio"], rows)
    return EXIT_OK if ok else EXIT_INVARIANT


COMMANDS = {
    "verify-identities": cmd_verify_identities,
    "weights": cmd_weights,
    "simulate": cmd_simulate,
    "control": cmd_control,
    "observability": cmd_observability,
    "sweep": cmd_sweep,
    "carleman": cmd_carleman,
}

# flag -> (config key, help)
_FLAGS = {
    "--n": ("N", "interior nodes (h = 1/(N+1))"),
    "--k": ("K", "time steps / tree depth"),
    "--T": ("T", "horizon"),
    "--delta": ("delta", "weight time shift, in (0, 1/2)"),
    "--lam": ("lam", "Carleman parameter lambda"),
    "--mu": ("mu", "Carleman parameter mu"),
    "--C": ("C", "penalty rule eps = exp(-C/h)"),
    "--G0": ("G0", "control interval 'a,b'"),
    "--G1": ("G1", "intermediate interval 'a,b'"),
    "--G2": ("G2", "weight-peak interval 'a,b'"),
    "--a1": ("a1", "drift coefficient expression in t, x"),
    "--a2": ("a2", "diffusion coefficient expression in t, x"),
    "--y0": ("y0", "initial state expression in x"),
    "--tol": ("tol", "CG relative tolerance"),
    "--max-iter": ("max_iter", "CG iteration cap (0: 2 * dim)"),
    "--seed": ("seed", "random seed"),
    "--trials": ("trials", "identity-suite trials"),
    "--lambda0": ("lambda0", "regime constant lambda_0"),
    "--eps0": ("eps0", "regime constant eps_0"),
    "--h0": ("h0", "regime constant h_0"),
    "--sweep-N": ("sweep_N", "comma list of N for sweep"),
    "--sweep-T": ("sweep_T", "comma list of T for sweep"),
    "--output": ("output", "CSV destination ('-' for stdout)"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shum", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value file")
        for flag, (key, help_) in _FLAGS.items():
            p.add_argument(flag, dest=f"opt_{key}", default=None, help=help_)
        if name in ("simulate", "sweep"):
            p.add_argument("--plot", default=None, help="whitespace-separated plot-data file")
        if name == "observability":
            p.add_argument("--power-tol", type=float, default=1e-8)
            p.add_argument("--power-iter", type=int, default=200)
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    for key in ExperimentConfig.keys():
        raw = getattr(args, f"opt_{key}", None)
        if raw is not None:
            cfg.set(key, raw, "command line")
    return cfg.validate()


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, RegimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CertificateError as exc:
        print(f"invariant failed: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (WeightOverflowError, FloatingPointError, ConvergenceError, np.linalg.LinAlgError) as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return EXIT_GUARD


if __name__ == "__main__":
    sys.exit(main())
