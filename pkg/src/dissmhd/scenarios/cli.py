"""Command line entry point ``mhd``.

Exit status: 0 success, 1 completed but a check failed, 2 configuration
error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys

import numpy as np

from .. import grid as g
from ..elliptic import EllipticError, IncompatibleDataError, combined_extension, default_delta0, harmonic_space, stationarity_test
from ..thermo import gibbs_residual, hypothesis_report
from .config import ConfigError, build, config_hash, load_config
from .runners import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, run_scenario
from .shell import ShellError, static_shell

EXIT_CHECK_FAILED = 1

log = logging.getLogger("dissmhd")


class JsonFormatter(logging.Formatter):
    def format(self, record):
        out = {"level": record.levelname, "logger": record.name, "message": record.getMessage()}
        if record.exc_info:
            out["exc"] = self.formatException(record.exc_info)
        return json.dumps(out)


def _setup_logging(level):
    h = logging.StreamHandler(sys.stderr)
    h.setFormatter(JsonFormatter())
    root = logging.getLogger()
    root.handlers[:] = [h]
    root.setLevel(getattr(logging, level.upper()))


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


def _print(obj):
    print(json.dumps(_clean(obj), indent=2, sort_keys=True))


def _scenario(path):
    return build(load_config(path))


def cmd_run(args):
    cfg = load_config(args.config)
    res = run_scenario(cfg, out_dir=args.output, dry_run=args.dry_run)
    if args.dry_run:
        _print(res.report)
        return EXIT_OK
    rep = res.report
    _print({k: rep.get(k) for k in ("scenario", "status", "passed", "checks", "config_hash", "error")}
           | {"output_dir": res.out_dir})
    if res.status != EXIT_OK:
        return res.status
    return EXIT_OK if rep.get("passed", True) else EXIT_CHECK_FAILED


def cmd_check_eos(args):
    sc = _scenario(args.config)
    eos, tr = sc.models.eos, sc.models.transport
    rep = hypothesis_report(eos, tr)
    rng = np.random.default_rng(sc.config["seed"])
    lr, lt = np.log10(args.rho_range), np.log10(args.theta_range)
    rho = 10.0 ** rng.uniform(lr[0], lr[1], args.samples)
    theta = 10.0 ** rng.uniform(lt[0], lt[1], args.samples)
    res = np.maximum(*gibbs_residual(rho, theta, eos, h=args.h))
    gibbs = {"samples": args.samples, "h": args.h, "rho_range": args.rho_range, "theta_range": args.theta_range, "max_residual": float(res.max()),
             "tolerance": args.gibbs_tol, "passed": bool(res.max() < args.gibbs_tol)}
    out = {"hypotheses": rep, "gibbs": gibbs}
    _print(out)
    ok = rep["passed"] and gibbs["passed"]
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_stationarity(args):
    sc = _scenario(args.config)
    v = stationarity_test(sc.grid, sc.spec, args.time, tol=args.tol)
    _print(v.to_dict())
    return EXIT_OK


def cmd_harmonic_dim(args):
    sc = _scenario(args.config)
    b = harmonic_space(sc.grid, sc.spec, tol=args.tol)
    _print({"dim": b.dim, "singular_values": list(b.singular_values),
            "magnetic_dirichlet": list(sc.spec.magnetic_dirichlet), "magnetic_neumann": list(sc.spec.magnetic_neumann)})
    return EXIT_OK


def cmd_extend_b(args):
    sc = _scenario(args.config)
    delta0 = args.delta0 if args.delta0 is not None else default_delta0(sc.grid, sc.spec)
    ext = combined_extension(sc.grid, sc.spec, args.time, args.delta, delta0)
    norm = lambda F: math.sqrt(g.face_inner(sc.grid, F, F))  # noqa: E731
    out = {"delta": args.delta, "delta0": delta0, "config_hash": config_hash(sc.config),
           "norm_B_N": norm(ext.B_N), "norm_B_dD": norm(ext.B_dD), "norm_B_B": norm(ext.B_B),
           "max_div_B_B": float(np.abs(g.div(sc.grid, ext.B_B)).max())}
    if args.dump:
        state = g.FluidState(args.time, np.ones(sc.grid.shape), np.ones(sc.grid.shape), sc.grid.zeros_face(), ext.B_B)
        g.write_dump(args.dump, sc.grid, state, {"delta": args.delta, "delta0": delta0})
        out["dump"] = args.dump
    _print(out)
    return EXIT_OK


def cmd_plot(args):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from ..diagnostics import read_csv

    rows = read_csv(args.csv)
    if not rows:
        raise ConfigError("no records", args.csv)
    cols = args.columns.split(",") if args.columns else ["E_total", "F_shifted", "S_total", "u_l2"]
    cols = [c for c in cols if c in rows[0]]
    t = np.array([r["t"] for r in rows])
    fig, axes = plt.subplots(len(cols), 1, figsize=(6, 2.2 * len(cols)), sharex=True, squeeze=False)
    for ax, c in zip(axes[:, 0], cols):
        ax.plot(t, [r[c] for r in rows], lw=1.2)
        ax.set_ylabel(c)
        ax.grid(alpha=0.3)
    axes[-1, 0].set_xlabel("t")
    fig.tight_layout()
    fig.savefig(args.output)
    plt.close(fig)
    _print({"output": args.output, "columns": cols, "n_records": len(rows)})
    return EXIT_OK


def cmd_static_shell(args):
    kw = {}
    if args.beta is not None:
        k0, b = args.kappa0, args.beta
        kw = {"kappa": lambda t: k0 * (1 + t**b), "dkappa": lambda t: k0 * b * t ** (b - 1)}
    try:
        res = static_shell(args.r1, args.r2, args.theta_int, args.theta_ext, tuple(args.omega), g_bar=args.g_bar,
                           n=args.n, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc), "static-shell") from None
    _print(res.to_dict())
    return EXIT_OK


def make_parser():
    p = argparse.ArgumentParser(prog="mhd", description="Dissipative MHD box solver and diagnostics")
    p.add_argument("--log-level", default="warning", choices=["debug", "info", "warning", "error"])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario config")
    r.add_argument("config")
    r.add_argument("--dry-run", action="store_true", help="validate and print the resolved config")
    r.add_argument("-o", "--output", help="output directory (overrides output_dir)")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check-eos", help="check the constitutive hypotheses of the configured models")
    c.add_argument("config")
    c.add_argument("--samples", type=int, default=25)
    c.add_argument("--h", type=float, default=1e-4)
    c.add_argument("--gibbs-tol", type=float, default=1e-6)
    # the centred-difference error of the radiative 1/rho term grows like (theta/rho)^4 h^2
    c.add_argument("--rho-range", type=float, nargs=2, default=[1.0, 10.0])
    c.add_argument("--theta-range", type=float, nargs=2, default=[0.5, 2.0])
    c.set_defaults(func=cmd_check_eos)

    s = sub.add_parser("stationarity", help="test whether the magnetic data admit a potential extension")
    s.add_argument("config")
    s.add_argument("--time", type=float, default=0.0)
    s.add_argument("--tol", type=float, default=1e-6)
    s.set_defaults(func=cmd_stationarity)

    h = sub.add_parser("harmonic-dim", help="dimension of the discrete harmonic field space")
    h.add_argument("config")
    h.add_argument("--tol", type=float, default=1e-8)
    h.set_defaults(func=cmd_harmonic_dim)

    e = sub.add_parser("extend-b", help="build the magnetic boundary extension")
    e.add_argument("config")
    e.add_argument("--delta", type=float, required=True)
    e.add_argument("--delta0", type=float)
    e.add_argument("--time", type=float, default=0.0)
    e.add_argument("--dump", help="write the extension as a grid dump with this path prefix")
    e.set_defaults(func=cmd_extend_b)

    pl = sub.add_parser("plot", help="plot columns of a records CSV")
    pl.add_argument("csv")
    pl.add_argument("-o", "--output", required=True, help="image path (.png or .svg)")
    pl.add_argument("--columns", help="comma separated column names")
    pl.set_defaults(func=cmd_plot)

    sh = sub.add_parser("static-shell", help="radial conduction between spheres and the static obstruction")
    sh.add_argument("--r1", type=float, required=True)
    sh.add_argument("--r2", type=float, required=True)
    sh.add_argument("--theta-int", type=float, required=True)
    sh.add_argument("--theta-ext", type=float, required=True)
    sh.add_argument("--omega", type=float, nargs=3, required=True, metavar=("WX", "WY", "WZ"))
    sh.add_argument("--g-bar", type=float, default=1.0)
    sh.add_argument("--n", type=int, default=400)
    sh.add_argument("--kappa0", type=float, default=1.0)
    sh.add_argument("--beta", type=float, help="use kappa0 (1 + theta^beta) instead of a constant")
    sh.set_defaults(func=cmd_static_shell)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.log_level)
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ShellError, EllipticError, IncompatibleDataError) as exc:
        log.error("numerical failure: %s", exc)
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL if not isinstance(exc, IncompatibleDataError) else EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
