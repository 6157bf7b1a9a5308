"""Command-line front end: figure data, config-driven runs and a self-test.

Every subcommand writes CSV/JSON files into ``--out`` plus a
``manifest.json`` with the resolved parameters and SHA-256 checksums.
Exit codes: 0 success, 1 self-test or invariant failure, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import format_float, mirror_symmetry_defect
from .core import IntegrationError, ParameterError, PhysParams, derived_kappa, load_config

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

FIG2_THETAS = (math.pi / 4, math.pi / 2, 3 * math.pi / 4)
FIG2_N_DIRECT = tuple(range(1, 8))
FIG2_N_MEANFIELD = tuple(range(1, 8)) + tuple(10.0**k for k in range(1, 7))
FIG4_THETAS = tuple(k * math.pi / 12 for k in range(13))
FIG4_N_MEANFIELD = (10.0, 1e3, 1e4)
FIG4_GAMMAS = (0.0, 0.05, 0.1, 0.2)
FIG4_ZETAS = (0.25, 0.5, 1.0, 2.0)
FIG5_RATIOS = (0.5, 0.75, 0.9, 1.0, 1.1, 1.25, 1.5)
FIG7_SIGMAS = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0, 2000.0)


# --- sweep tasks (top level so they pickle) ---------------------------------


def _task(job):
    kind, key, params, opts = job
    try:
        if kind == "eta_direct":
            from .direct import emitter_efficiency

            value = emitter_efficiency(int(params.n_em), params, dt=opts.get("dt"))
        elif kind == "eta_meanfield":
            from .meanfield import solve_meanfield_emitter

            value = solve_meanfield_emitter(params, dt=opts.get("dt"))[1]
        elif kind == "fid_direct":
            from .direct import solve_single_excitation_transfer

            value = solve_single_excitation_transfer(params, opts["gem"], dt=opts.get("dt"))[1].fidelity_bloch
        elif kind == "fid_meanfield":
            from .meanfield import solve_meanfield_transfer

            value = solve_meanfield_transfer(params, opts["gem"], dt=opts.get("dt"))[1].fidelity_bloch
        elif kind == "fid_inhomo":
            from .inhomo import solve_inhomo_transfer

            value = solve_inhomo_transfer(params, None, opts["gem"], dt=opts.get("dt"))[1].fidelity_bloch
        else:  # pragma: no cover - programming error
            raise ValueError(kind)
        return key, value, ""
    except (ParameterError, IntegrationError, ArithmeticError) as exc:
        return key, float("nan"), f"{type(exc).__name__}: {exc}"


def run_sweep(jobs, workers: int):
    """Run jobs and return results sorted by their key tuple."""
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_task, jobs))
    else:
        results = [_task(j) for j in jobs]
    return sorted(results, key=lambda r: r[0])


# --- output helpers ---------------------------------------------------------


class Outputs:
    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = []

    def write(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.write_text(text, encoding="utf-8", newline="\n")
        self.files.append(path)
        return path

    def csv(self, name: str, header, rows) -> Path:
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for row in rows:
            buf.write(",".join(_cell(v) for v in row) + "\n")
        return self.write(name, buf.getvalue())

    def manifest(self, command: str, params: dict, settings: dict, seconds: float) -> Path:
        outputs = []
        for p in self.files:
            outputs.append({"path": p.name, "sha256": hashlib.sha256(p.read_bytes()).hexdigest()})
        data = {
            "command": command,
            "version": __version__,
            "params": params,
            "settings": settings,
            "outputs": outputs,
            "wall_seconds": round(seconds, 3),
        }
        path = self.dir / "manifest.json"
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
        return path


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format_float(v)


def verify_manifest(path) -> bool:
    """True when every listed output exists and matches its checksum."""
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    for item in data["outputs"]:
        f = path.parent / item["path"]
        if not f.exists() or hashlib.sha256(f.read_bytes()).hexdigest() != item["sha256"]:
            return False
    return True


_ANGLE = re.compile(r"^\s*([0-9.eE+-]*)\s*\*?\s*pi\s*(?:/\s*([0-9.eE+-]+))?\s*$")


def parse_number(text: str) -> float:
    """Float, or a multiple of pi such as ``pi/4`` or ``3pi/4``."""
    m = _ANGLE.match(text)
    if m:
        num = float(m.group(1)) if m.group(1) not in ("", "+", "-") else (-1.0 if m.group(1) == "-" else 1.0)
        den = float(m.group(2)) if m.group(2) else 1.0
        return num * math.pi / den
    try:
        return float(text)
    except ValueError:
        raise ParameterError(f"cannot parse number {text!r}") from None


def parse_list(text: str):
    text = text.strip()
    return [] if not text else [parse_number(t) for t in text.split(",")]


# --- subcommands ------------------------------------------------------------


def _figure_params(n, t_kappa, overrides: dict, **kw) -> PhysParams:
    """Critically damped parameters for ``n`` ions, ``T = t_kappa / kappa``.

    ``overrides`` (config entries) replace figure defaults; the swept
    values in ``kw`` replace both.
    """
    values = {**overrides, **kw}
    values.pop("n_em", None)
    g = values.get("g", 1.0)
    kappa = values.pop("kappa", None) or derived_kappa(g, n)
    t_write = values.pop("t_write", None) or t_kappa / kappa
    return PhysParams(n_em=n, kappa=kappa, t_write=t_write, **values)


def _overrides(args) -> dict:
    return load_config(args.config) if args.config else {}


def cmd_fig2(args, out: Outputs) -> dict:
    thetas = parse_list(args.theta0) if args.theta0 is not None else list(FIG2_THETAS)
    n_direct = parse_list(args.n_direct) if args.n_direct is not None else list(FIG2_N_DIRECT)
    n_mf = parse_list(args.n_meanfield) if args.n_meanfield is not None else list(FIG2_N_MEANFIELD)
    ov = _overrides(args)
    opts = {"dt": args.dt}
    jobs = []
    for th in thetas:
        for n in n_direct:
            if n > 7:
                raise ParameterError("direct method supports n <= 7")
            p = _figure_params(n, 20.0, ov, theta0=th)
            jobs.append(("eta_direct", ("direct", th, float(n)), p, opts))
        for n in n_mf:
            p = _figure_params(n, 20.0, ov, theta0=th)
            jobs.append(("eta_meanfield", ("meanfield", th, float(n)), p, opts))
    rows = [(k[0], k[1], k[2], v, err) for k, v, err in run_sweep(jobs, args.workers)]
    out.csv("fig2.csv", ("method", "theta0", "n", "eta", "error"), rows)
    return {"theta0": thetas, "n_direct": n_direct, "n_meanfield": n_mf, **ov}


def cmd_fig3(args, out: Outputs) -> dict:
    from .direct import solve_single_excitation_transfer
    from .meanfield import solve_meanfield_transfer

    ov = _overrides(args)
    dense = args.dense and args.gem == "discretized"
    summary = {}
    for label, n in (("n1", 1.0), ("n1e6", 1e6)):
        p = _figure_params(n, 20.0, ov)
        if n == 1:
            rec, res = solve_single_excitation_transfer(p, args.gem, dt=args.dt, every=args.every, dense=dense)
        else:
            rec, res = solve_meanfield_transfer(p, args.gem, dt=args.dt, every=args.every, dense=dense)
        out.write(f"fig3_{label}_trajectory.csv", rec.to_csv())
        out.write(f"fig3_{label}_result.csv", res.to_csv())
        out.write(f"fig3_{label}_result.json", res.to_json())
        if dense:
            out.write(f"fig3_{label}_gem_dense.csv", rec.dense_csv("gem"))
        summary[label] = {"fidelity": res.fidelity_bloch, "mirror_defect": mirror_symmetry_defect(rec, p.t_write)}
    return {**ov, "summary": summary}


def cmd_fig4(args, out: Outputs) -> dict:
    ov = _overrides(args)
    thetas = parse_list(args.theta0) if args.theta0 is not None else list(FIG4_THETAS)
    gammas = parse_list(args.gammas) if args.gammas is not None else list(FIG4_GAMMAS)
    zetas = parse_list(args.zetas) if args.zetas is not None else list(FIG4_ZETAS)
    opts = {"dt": args.dt, "gem": args.gem}
    jobs = []
    for th in thetas:
        jobs.append(("fid_direct", ("direct", 1.0, th), _figure_params(1, 50.0, ov, theta0=th), opts))
        for n in FIG4_N_MEANFIELD:
            jobs.append(("fid_meanfield", ("meanfield", n, th), _figure_params(n, 50.0, ov, theta0=th), opts))
    rows = [(k[0], k[1], k[2], v, err) for k, v, err in run_sweep(jobs, args.workers)]
    out.csv("fig4_theta.csv", ("method", "n", "theta0", "fidelity", "error"), rows)

    ov_grid = {k: v for k, v in ov.items() if k not in ("gamma", "zeta")}
    jobs = []
    for method, n, kind in (("direct", 1.0, "fid_direct"), ("meanfield", 1e6, "fid_meanfield")):
        for gm in gammas:
            for z in zetas:
                p = _figure_params(n, 50.0, ov_grid, gamma=gm, zeta=z)
                jobs.append((kind, (method, n, gm, z), p, opts))
    rows = [(k[0], k[1], k[2], k[3], v, err) for k, v, err in run_sweep(jobs, args.workers)]
    out.csv("fig4_gamma_zeta.csv", ("method", "n", "gamma", "zeta", "fidelity", "error"), rows)
    return {"theta0": thetas, "gammas": gammas, "zetas": zetas, **ov}


def cmd_fig5(args, out: Outputs) -> dict:
    ov = _overrides(args)
    ratios = parse_list(args.ratios) if args.ratios is not None else list(FIG5_RATIOS)
    for r in ratios:
        if not r > 0:
            raise ParameterError(f"ratio must be positive, got {r!r}")
    base = _figure_params(1e6, 50.0, {"gamma": 0.0, **ov})
    opts = {"dt": args.dt, "gem": args.gem}
    jobs = [("fid_meanfield", (r,), base.replace(n_re=r * base.n_em), opts) for r in ratios]
    rows = [(k[0], v, err) for k, v, err in run_sweep(jobs, args.workers)]
    out.csv("fig5.csv", ("ratio", "fidelity", "error"), rows)
    return {"ratios": ratios, **base.as_dict()}


def cmd_fig6(args, out: Outputs) -> dict:
    from .inhomo import solve_inhomo_transfer

    ov = _overrides(args)
    p = _figure_params(1e6, 50.0, {"sigma_delta": 10.0, **ov})
    rec, res = solve_inhomo_transfer(p, None, args.gem, dt=args.dt, every=args.every, dense=args.dense)
    out.write("fig6_trajectory.csv", rec.to_csv())
    out.write("fig6_result.csv", res.to_csv())
    out.write("fig6_result.json", res.to_json())
    if args.dense:
        out.write("fig6_sigma_em_dense.csv", rec.dense_csv("sigma_em"))
        out.write("fig6_sigma_re_dense.csv", rec.dense_csv("sigma_re"))
    return {**p.as_dict(), "fidelity": res.fidelity_bloch}


def cmd_fig7(args, out: Outputs) -> dict:
    ov = _overrides(args)
    sigmas = parse_list(args.sigmas) if args.sigmas is not None else list(FIG7_SIGMAS)
    base = _figure_params(1e6, 50.0, ov)
    opts = {"dt": args.dt, "gem": args.gem}
    jobs = [("fid_inhomo", (s,), base.replace(sigma_delta=s), opts) for s in sigmas]
    rows = [(k[0], v, err) for k, v, err in run_sweep(jobs, args.workers)]
    out.csv("fig7.csv", ("sigma_delta", "fidelity", "error"), rows)
    return {"sigmas": sigmas, **base.as_dict()}


def cmd_run(args, out: Outputs) -> dict:
    if not args.config:
        raise ParameterError("run needs --config")
    p = PhysParams.from_config(args.config)
    method = args.method
    if method == "auto":
        if p.sigma_delta > 0:
            method = "inhomo"
        elif p.n_em == 1 and p.n_re == 1:
            method = "direct"
        else:
            method = "meanfield"
    kw = dict(dt=args.dt, every=args.every, dense=args.dense)
    if method == "direct":
        from .direct import solve_single_excitation_transfer

        rec, res = solve_single_excitation_transfer(p, args.gem, **kw)
    elif method == "meanfield":
        from .meanfield import solve_meanfield_transfer

        rec, res = solve_meanfield_transfer(p, args.gem, **kw)
    else:
        from .inhomo import solve_inhomo_transfer

        rec, res = solve_inhomo_transfer(p, None, args.gem, **kw)
    out.write("trajectory.csv", rec.to_csv())
    out.write("result.csv", res.to_csv())
    out.write("result.json", res.to_json())
    if args.dense and rec.e_gem_dense is not None:
        out.write("gem_dense.csv", rec.dense_csv("gem"))
    if args.dense and rec.e_sigma_em_dense is not None:
        out.write("sigma_em_dense.csv", rec.dense_csv("sigma_em"))
        out.write("sigma_re_dense.csv", rec.dense_csv("sigma_re"))
    return {**p.as_dict(), "method": method}


def cmd_selftest(args) -> int:
    from .selftest import format_report, run_selftest

    checks = run_selftest()
    sys.stdout.write(format_report(checks))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL


COMMANDS = {
    "fig2": cmd_fig2,
    "fig3": cmd_fig3,
    "fig4": cmd_fig4,
    "fig5": cmd_fig5,
    "fig6": cmd_fig6,
    "fig7": cmd_fig7,
    "run": cmd_run,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value file overriding figure defaults")
    common.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    common.add_argument("--workers", metavar="K", type=int, default=1, help="parallel worker processes")
    common.add_argument("--dt", metavar="X", type=float, default=None, help="integrator step (units of 1/g)")
    common.add_argument("--gem", choices=("discretized", "broadband"), default="broadband")
    common.add_argument("--every", type=int, default=1, help="record every k-th integrator step")
    common.add_argument("--dense", action="store_true", help="also write dense E(xi,t) / E(delta,t) dumps")

    parser = argparse.ArgumentParser(prog="gemtransfer", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    p2 = sub.add_parser("fig2", parents=[common], help="coupling efficiency vs ion number")
    p2.add_argument("--theta0", help="comma list, e.g. pi/4,pi/2")
    p2.add_argument("--n-direct", help="comma list of ion numbers (<= 7)")
    p2.add_argument("--n-meanfield", help="comma list of ion numbers")
    sub.add_parser("fig3", parents=[common], help="transfer dynamics, N=1 and N=1e6")
    p4 = sub.add_parser("fig4", parents=[common], help="fidelity over theta0 and over the (gamma, zeta) grid")
    p4.add_argument("--theta0")
    p4.add_argument("--gammas")
    p4.add_argument("--zetas")
    p5 = sub.add_parser("fig5", parents=[common], help="fidelity vs N_re/N_em")
    p5.add_argument("--ratios")
    sub.add_parser("fig6", parents=[common], help="inhomogeneous transfer dynamics")
    p7 = sub.add_parser("fig7", parents=[common], help="fidelity vs inhomogeneous width")
    p7.add_argument("--sigmas")
    pr = sub.add_parser("run", parents=[common], help="single transfer from a config file")
    pr.add_argument("--method", choices=("auto", "direct", "meanfield", "inhomo"), default="auto")
    sub.add_parser("selftest", help="run the invariant suite")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "selftest":
        return cmd_selftest(args)
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    if args.dt is not None and not args.dt > 0:
        parser.error("--dt must be positive")
    start = time.perf_counter()
    out = Outputs(Path(args.out))
    try:
        info = COMMANDS[args.command](args, out)
    except (ParameterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    settings = {"dt": args.dt, "gem": args.gem, "workers": args.workers, "every": args.every, "dense": args.dense}
    out.manifest(args.command, info, settings, time.perf_counter() - start)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
