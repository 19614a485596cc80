"""Command-line front end: ``relaxim <command> [--config PATH] [options]``.

Exit codes: 0 success, 2 configuration or input error, 3 a verdict of
"conditions not satisfied", 4 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import (ConfigError, RunConfig, build_model, build_scalar, build_sequence,
                     default_config, load_config, wave_forcing)
from .dynamics import DynamicsError
from .linsolve import LinearSolveError
from .manifold import (ManifoldError, build_chart, compare_epsilon, lipschitz_of_M, perron_config,
                       tracking_shadow)
from .nonlin import (Counterexample, NonlinearityError, equilibrium_spectrum, lipschitz_estimate,
                     normal_hyperbolicity_gaps, admissible_dimensions)
from .spaces import EnergyVector, ValidationError, write_signal_csv
from .spectrum import (Dirichlet1D, SpectrumError, critical_index, gap_report, gap_scan,
                       projector_coefficients, root_arrays)
from .wave1d import EllipticError, WavePipelineConfig, run_pipeline

log = logging.getLogger("relaxim")

SCHEMA_VERSION = "1.0"
ENV_OUT = "RELAXIM_OUT"

EXIT_OK, EXIT_CONFIG, EXIT_VERDICT, EXIT_NUMERIC = 0, 2, 3, 4


# ---------------------------------------------------------------------------
# output helpers

def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": _clean(obj.real), "im": _clean(obj.imag)}
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path: Path, obj) -> None:
    text = json.dumps(_clean(obj), indent=2, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8")


class Run:
    """Output directory, manifest and timings of one command invocation."""

    def __init__(self, command: str, cfg: RunConfig, out: Path):
        self.command, self.cfg, self.out = command, cfg, out
        self.files: list[str] = []
        self.timings: dict[str, float] = {}
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def timed(self, label: str):
        run = self

        class _T:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[label] = time.perf_counter() - self.t0
        return _T()

    def report(self, body: dict, name: str = "report.json") -> None:
        body = {"schema_version": SCHEMA_VERSION, "command": self.command,
                "config_hash": self.cfg.hash(), **body}
        write_json(self.path(name), body)

    def finish(self) -> None:
        write_json(self.out / "manifest.json", {
            "schema_version": SCHEMA_VERSION, "command": self.command,
            "config_hash": self.cfg.hash(), "config": self.cfg.canonical(),
            "seed": self.cfg["seed"], "files": sorted(set(self.files)),
            "versions": {"relaxim": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": platform.python_version()},
        })
        # wall-clock times live in their own file so that the reports stay reproducible
        write_json(self.out / "timings.json", self.timings)


def output_root(args, cfg: RunConfig, command: str) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.get("output.dir"):
        return Path(cfg["output.dir"])
    return Path(os.environ.get(ENV_OUT, "relaxim-out")) / command


def _resolve_N(cfg: RunConfig, seq, L: float) -> int:
    if cfg["N"] != "auto":
        return int(cfg["N"])
    scan = gap_scan(seq, L, cfg["eps"])
    if not scan:
        raise ManifoldError(f"no admissible N at (L, eps) = ({L:g}, {cfg['eps']:g})", refused=True)
    return scan[0].N


def _perron(cfg: RunConfig, seq, N: int, L: float, eps=None):
    return perron_config(seq, N, cfg["eps"] if eps is None else eps, L, h=cfg["perron.h"],
                         T=cfg.get("perron.T"), fp_max_iter=cfg["perron.max_iter"],
                         fp_rel_tol=cfg["perron.fp_tol"])


def _random_states(rng, M: int, count: int, scale: float, eps: float) -> list:
    n = np.arange(1, M + 1)
    return [EnergyVector(scale * rng.normal(size=M) / n ** 1.5, scale * rng.normal(size=M) / n ** 0.5,
                         eps) for _ in range(count)]


# ---------------------------------------------------------------------------
# commands

def cmd_analyze(cfg: RunConfig, run: Run) -> int:
    seq = build_sequence(cfg)
    eps, L = cfg["eps"], cfg["L"]
    scan = gap_scan(seq, L, eps)
    N = cfg["N"] if cfg["N"] != "auto" else (scan[0].N if scan else 1)
    rep = gap_report(seq, N, eps, L)
    mp, mm = root_arrays(seq.values, eps)
    n_cr = critical_index(seq, eps)
    body = {
        "eps": eps, "L": L, "N": N,
        "gap_report": rep.as_dict(),
        "admissible_N": [r.N for r in scan],
        "n_cr": "unbounded" if n_cr is None else n_cr,
        "roots": [{"n": i + 1, "lambda": float(seq.values[i]), "mu_plus": complex(mp[i]),
                   "mu_minus": complex(mm[i])} for i in range(seq.count)],
        "verdict": "PASS" if rep.admissible else "FAIL",
        "reasons": rep.reasons,
    }
    if rep.admissible and (eps == 0 or n_cr is None or N <= n_cr):
        pc = projector_coefficients(seq, N, eps)
        body["projector"] = {"a": pc.a, "b": pc.b}
    run.report(body)
    print(f"N = {N}  gap = {rep.gap:.6g}  theta = {rep.theta if rep.theta is None else f'{rep.theta:.7f}'}"
          f"  kappa = {rep.contraction:.6g}  n_cr = {body['n_cr']}")
    print(f"{'n':>4} {'lambda':>12} {'Re mu+':>14} {'Im mu+':>12} {'Re mu-':>14}")
    for i in range(min(seq.count, 12)):
        print(f"{i + 1:4d} {seq.values[i]:12.6g} {mp[i].real:14.7g} {mp[i].imag:12.6g} "
              f"{mm[i].real:14.7g}")
    print(f"admissible N: {body['admissible_N']}")
    print(f"verdict: {body['verdict']}" + (f" ({', '.join(rep.reasons)})" if rep.reasons else ""))
    return EXIT_OK if rep.admissible else EXIT_VERDICT


def cmd_construct(cfg: RunConfig, run: Run, threads: int) -> int:
    seq = build_sequence(cfg)
    L = cfg["L"]
    N = _resolve_N(cfg, seq, L)
    F = build_model(cfg, seq, N)
    pcfg = _perron(cfg, seq, N, L)
    with run.timed("chart"):
        chart = build_chart(F, pcfg, seq, threads=threads, axis_points=cfg["chart.axis_points"],
                            random_count=cfg["chart.random"], radius=cfg["chart.radius"],
                            seed=cfg["seed"])
    lip = lipschitz_of_M(F, pcfg, seq, points=chart.points)
    chart.to_csv(run.path("chart.csv"))
    summ = chart.summary()
    ok = (summ["max_boundary_defect"] <= 1e-8
          and summ["max_observed_contraction"] <= pcfg.kappa + 0.02)
    run.report({"perron": pcfg.as_dict(), "nonlinearity": F.describe(), "chart": summ,
                "lipschitz_of_M": lip.as_dict(), "verdict": "PASS" if ok else "FAIL"})
    print(f"constructed {summ['points']} points, N = {N}, kappa = {pcfg.kappa:.4g}, "
          f"observed contraction {summ['max_observed_contraction']:.4g}, "
          f"Lip(M) ~ {lip.max_ratio:.4g}")
    return EXIT_OK if ok else EXIT_VERDICT


def cmd_track(cfg: RunConfig, run: Run, threads: int) -> int:
    seq = build_sequence(cfg)
    L = cfg["L"]
    N = _resolve_N(cfg, seq, L)
    F = build_model(cfg, seq, N)
    pcfg = _perron(cfg, seq, N, L)
    rng = np.random.default_rng(cfg["seed"])
    states = _random_states(rng, F.modes, cfg["track.count"], cfg["track.scale"], pcfg.eps)
    results = []
    with run.timed("tracking"):
        for xi in states:
            results.append(tracking_shadow(xi, F, pcfg, seq))
    rates = [r.rate for r in results]
    ok = all(r >= 0.95 * pcfg.theta for r in rates)
    width = max(r.t.size for r in results)
    t = results[0].t
    dist = np.full((len(results), width), np.nan)
    for i, r in enumerate(results):
        dist[i, :r.distance.size] = r.distance
    write_signal_csv(run.path("tracking.csv"), t, np.nan_to_num(dist, nan=0.0))
    run.report({"perron": pcfg.as_dict(), "theta": pcfg.theta, "rates": rates,
                "runs": [r.as_dict() for r in results],
                "cutoff": "quintic smoothstep on [0, 1]",
                "verdict": "PASS" if ok else "FAIL"})
    print(f"theta = {pcfg.theta:.6g}; fitted rates: " + ", ".join(f"{r:.4g}" for r in rates))
    return EXIT_OK if ok else EXIT_VERDICT


def cmd_compare_eps(cfg: RunConfig, run: Run) -> int:
    seq = build_sequence(cfg)
    L = cfg["L"]
    N = _resolve_N(cfg, seq, L)
    F = build_model(cfg, seq, N)
    p = np.array(cfg["compare.p"])[:N]
    with run.timed("compare"):
        res = compare_epsilon(p, F, cfg["compare.eps"], seq, N, L, h=cfg["perron.h"])
    ok = 0.9 <= res.slope <= 1.1
    run.report({"N": N, "p": p, "nonlinearity": F.describe(), **res.as_dict(),
                "verdict": "PASS" if ok else "FAIL"})
    for e, d in zip(res.eps, res.distances):
        print(f"eps = {e:10.3e}   d = {d:.6e}")
    print(f"slope = {res.slope:.4f}")
    return EXIT_OK if ok else EXIT_VERDICT


def cmd_counterexample(cfg: RunConfig, run: Run) -> int:
    seq = build_sequence(cfg)
    eps = cfg["eps"]
    c = RunConfig(dict(cfg.values, **{"nonlinearity.kind": "counterexample"}), cfg.source)
    with run.timed("build"):
        F = build_model(c, seq)
    assert isinstance(F, Counterexample)
    u_plus, u_minus = F.equilibria()
    sp = equilibrium_spectrum(F, u_plus, eps, seq, count=F.modes)
    sm = equilibrium_spectrum(F, u_minus, eps, seq, count=F.modes)
    lip = lipschitz_estimate(F, 400, 1.0, cfg["seed"])
    inter = normal_hyperbolicity_gaps([sp, sm])
    ok = lip < F.declared_L and not inter
    run.report({
        "eps": eps, "L": F.declared_L, "R": F.R, "nonlinearity": F.describe(),
        "sampled_lipschitz": lip, "jacobian_bound": F.jacobian_bound(),
        "u_plus": {**sp.as_dict(), "admissible_N": admissible_dimensions(sp)},
        "u_minus": {**sm.as_dict(), "admissible_N": admissible_dimensions(sm)},
        "admissible_N_intersection": inter,
        "verdict": "PASS" if ok else "FAIL",
    })
    print(f"R = {F.R:g}, sampled Lipschitz {lip:.4g} < L = {F.declared_L:g}")
    print(f"u0+ collisions at {sp.collisions}, admissible N {admissible_dimensions(sp)}")
    print(f"u0- collisions at {sm.collisions}, admissible N {admissible_dimensions(sm)}")
    print(f"admissible_N_intersection = {inter}")
    return EXIT_OK if ok else EXIT_VERDICT


def cmd_wave1d(cfg: RunConfig, run: Run, threads: int) -> int:
    seq = build_sequence(cfg)
    if not isinstance(seq.generator, Dirichlet1D) and cfg["operator.kind"] != "custom":
        raise ConfigError("wave1d needs operator.kind = dirichlet (or custom values)")
    length = cfg["operator.length"]
    wcfg = WavePipelineConfig(
        f=build_scalar(cfg), g=wave_forcing(cfg, seq.count, length), R=cfg["wave.R"],
        eps=cfg["eps"], L=cfg["L"] if "L" in cfg.explicit else None, modes=seq.count,
        length=length, spectrum=seq, cut_factor=cfg["wave.cut_factor"],
        width_fraction=cfg["wave.width_fraction"], newton_tol=cfg["wave.newton_tol"],
        h=cfg["perron.h"], chart_radius=cfg["chart.radius"],
        chart_axis_points=cfg["chart.axis_points"], chart_random=cfg["chart.random"],
        t_check=cfg["invariance.t_check"], track_count=cfg["wave.track_count"],
        seed=cfg["seed"], threads=threads)
    with run.timed("pipeline"):
        res = run_pipeline(wcfg)
    if res.chart is not None:
        res.chart.to_csv(run.path("chart.csv"))
    if res.trajectories:
        t = res.trajectories[0].t
        n = min(tr.distance.size for tr in res.trajectories)
        write_signal_csv(run.path("trajectories.csv"), t[:n],
                         np.array([tr.distance[:n] for tr in res.trajectories]))
    run.report(res.report)
    verdict = res.report["verdict"]
    print(f"wave1d verdict: {verdict}" + (f" ({res.report['message']})" if "message" in res.report else ""))
    return EXIT_VERDICT if verdict == "FAIL" else EXIT_OK


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relaxim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"relaxim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("analyze", "spectral gap report"),
                        ("construct", "sample the manifold on a chart"),
                        ("track", "exponential tracking of random trajectories"),
                        ("compare-eps", "distance between M_eps and M_0"),
                        ("counterexample", "two-equilibrium obstruction"),
                        ("wave1d", "damped wave equation pipeline")]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", metavar="PATH", help="key = value configuration file")
        p.add_argument("--out", metavar="DIR", help=f"output directory (default: ${ENV_OUT}/<command>)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--threads", type=int, help="worker threads for chart construction")
        p.add_argument("--verbose", action="store_true", help="debug logging")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else default_config()
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
        cfg = cfg.with_overrides(seed=args.seed, threads=args.threads)
        threads = cfg["threads"]
        run = Run(args.command, cfg, output_root(args, cfg, args.command))
        if args.command == "analyze":
            code = cmd_analyze(cfg, run)
        elif args.command == "construct":
            code = cmd_construct(cfg, run, threads)
        elif args.command == "track":
            code = cmd_track(cfg, run, threads)
        elif args.command == "compare-eps":
            code = cmd_compare_eps(cfg, run)
        elif args.command == "counterexample":
            code = cmd_counterexample(cfg, run)
        else:
            code = cmd_wave1d(cfg, run, threads)
        run.finish()
        return code
    except (ConfigError, ValidationError, SpectrumError, NonlinearityError, ValueError) as exc:
        print(f"relaxim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ManifoldError as exc:
        if exc.refused:
            print(f"relaxim: conditions not satisfied: {exc}", file=sys.stderr)
            return EXIT_VERDICT
        print(f"relaxim: no convergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except LinearSolveError as exc:
        print(f"relaxim: conditions not satisfied: {exc}", file=sys.stderr)
        return EXIT_VERDICT
    except (EllipticError, DynamicsError) as exc:
        print(f"relaxim: no convergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
