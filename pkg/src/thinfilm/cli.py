"""Command-line entry point.

Commands: run, sweep, ode {shoot|inner|phi|basis|qgamma|wave},
check {energy|log-integral|cancellation|nomove|typeb-profile}.
Exit codes: 0 ok, 2 usage/config error, 3 solver hard failure,
4 check failure. THINFILM_OUT sets the default output root.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, csvio, harness, inner_ode, model
from .config import DEFAULTS, build_solver_config, parse_config_file
from .errors import CheckFailure, ConfigError, DomainError, RegimeError, SolverFailure
from .pde_solver import SolverConfig, simulate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4


def _say(args, *msg):
    if not args.quiet:
        print(*msg)


def _out_dir(args, command):
    root = args.out or os.environ.get("THINFILM_OUT")
    if root is None:
        root = os.path.join(os.getcwd(), "thinfilm-out")
    path = root if args.out else os.path.join(root, command)
    os.makedirs(path, exist_ok=True)
    return path


class _Manifest:
    def __init__(self, command, config_path, out_dir):
        self.t0 = time.monotonic()
        self.payload = {
            "command": command,
            "config": str(config_path) if config_path else None,
            "out_dir": str(out_dir),
            "tool_version": __version__,
            "files": [],
            "exit_status": None,
            "duration_s": None,
        }
        self.out_dir = out_dir

    def declare(self, name):
        self.payload["files"].append(name)
        return os.path.join(self.out_dir, name)

    def finish(self, exit_status):
        self.payload["exit_status"] = exit_status
        self.payload["duration_s"] = round(time.monotonic() - self.t0, 3)
        csvio.write_manifest(os.path.join(self.out_dir, "manifest.json"), self.payload)


def _load_config(args):
    if args.config:
        tree = parse_config_file(args.config)
    else:
        tree = {"schema": 1}
    return build_solver_config(tree)


def cmd_run(args) -> int:
    cfg, opts = _load_config(args)
    out = _out_dir(args, "run")
    manifest = _Manifest("run", args.config, out)
    status = EXIT_OK
    try:
        traj = simulate(cfg, opts["t_end"])
    except SolverFailure as exc:
        traj = exc.trajectory
        status = EXIT_SOLVER
        _say(args, f"solver hard failure: {exc}")
    if traj is not None:
        csvio.write_profile_csv(manifest.declare("profile.csv"), traj)
        csvio.write_diagnostics_csv(manifest.declare("diagnostics.csv"), traj)
        _say(args, f"wrote {len(traj.times)} steps to {out} ({traj.status})")
    manifest.finish(status)
    return status


def cmd_sweep(args) -> int:
    cfg, _ = _load_config(args)
    if args.law not in harness.LAWS:
        raise ConfigError(f"unknown law {args.law!r}; valid laws: {', '.join(harness.LAWS)}")
    if not args.eps:
        raise ConfigError("--eps must be a nonempty comma list, e.g. 1e-2,1e-3")
    try:
        eps_list = [float(e) for e in args.eps.split(",") if e.strip()]
    except ValueError as exc:
        raise ConfigError(f"--eps: {exc}")
    if not eps_list:
        raise ConfigError("--eps parsed to an empty list")
    out = _out_dir(args, "sweep")
    manifest = _Manifest("sweep", args.config, out)
    records = harness.sweep_epsilon(args.law, cfg, eps_list, threads=args.threads)
    csvio.write_sweep_csv(manifest.declare(f"sweep_{args.law}.csv"), records)
    ok = [r for r in records if r.status == "ok"]
    if len(ok) >= 3:
        fit = harness.fit_log_law(records)
        csvio.write_fit_json(manifest.declare(f"fit_{args.law}.json"), args.law, fit, eps_list)
        _say(args, f"fit: slope={fit.slope:.6g} intercept={fit.intercept:.6g} "
                   f"r2={fit.r_squared:.4f}")
    for r in records:
        _say(args, f"eps={r.epsilon:g} sdot={r.sdot_measured:.6g} "
                   f"pred={r.sdot_predicted:.6g} [{r.status}]")
    status = EXIT_OK if ok else EXIT_SOLVER
    manifest.finish(status)
    return status


def cmd_ode(args) -> int:
    sub = args.ode_command
    if sub == "qgamma":
        print(f"{inner_ode.q_gamma(args.y, args.gamma, args.n):.17g}")
        return EXIT_OK
    if sub == "phi":
        val = inner_ode.local_phi(args.n, args.gamma, args.sdot, args.xi,
                                  phi2_seed=args.phi2_seed)
        print(f"{val:.17g}")
        return EXIT_OK
    if sub == "basis":
        basis = inner_ode.asymptotic_basis(args.regime)
        payload = {"regime": basis.regime,
                   "entries": [{"description": e.description, "data": e.data}
                               for e in basis.entries]}
        print(json.dumps(payload, indent=2))
        return EXIT_OK
    if sub == "shoot":
        sol = inner_ode.complete_wetting_shoot(eta0=args.eta0, eta_max=args.eta_max,
                                               tol=args.tol)
        payload = {
            "K0": sol.shoot_param,
            "beta1": inner_ode.BETA_1,
            "classification": sol.classification,
            "eta_max": float(sol.y_nodes[-1]),
            "farfield_ratio": sol.farfield_ratio,
        }
        print(json.dumps(payload, indent=2))
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            manifest = _Manifest("ode-shoot", None, args.out)
            csvio.write_inner_profile_csv(manifest.declare("shoot_profile.csv"), sol)
            manifest.finish(EXIT_OK)
        return EXIT_OK
    if sub == "inner":
        p = model.SlipParameters(n=args.n, epsilon=1e-3, theta=args.theta)
        sol = inner_ode.integrate_inner_partial(p, args.sdot, (args.y0, args.ymax))
        payload = {
            "classification": sol.classification,
            "y_end": float(sol.y_nodes[-1]),
            "H_end": float(sol.H[-1]),
            "slope_end": float(sol.H1[-1]),
        }
        print(json.dumps(payload, indent=2))
        return EXIT_OK
    if sub == "wave":
        p = model.SlipParameters(n=args.n, epsilon=args.epsilon,
                                 theta=1.0, no_slip_limit=args.epsilon == 0.0)
        seeds = [float(v) for v in args.seeds.split(",")]
        if len(seeds) != 3:
            raise ConfigError("--seeds must be h,h',h'' (three values)")
        sol = inner_ode.travelling_wave(p, args.sign, (args.xi0, args.ximax), seeds)
        payload = {
            "classification": sol.classification,
            "xi_end": float(sol.y_nodes[-1]),
            "h_end": float(sol.H[-1]),
        }
        print(json.dumps(payload, indent=2))
        return EXIT_OK
    raise ConfigError(f"unknown ode subcommand {sub!r}")


def cmd_check(args) -> int:
    kind = args.check_command
    if kind == "log-integral":
        numeric, closed = harness.log_integral_identity(args.delta)
        rel = abs(numeric - closed) / abs(closed) if closed else 0.0
        ok = rel < 1e-8
        print(f"numeric={numeric:.12g} closed={closed:.12g} rel={rel:.3e} "
              f"threshold=1e-08 -> {'pass' if ok else 'FAIL'}")
        return EXIT_OK if ok else EXIT_CHECK
    if kind == "energy":
        data = csvio.read_diagnostics_csv(args.traj)
        resid = np.abs(data["energy_residual"][1:])
        worst = float(resid.max()) if resid.size else 0.0
        ok = worst <= args.tol
        print(f"max|residual|={worst:.6g} mean={float(resid.mean()) if resid.size else 0.0:.6g} "
              f"threshold={args.tol:g} -> {'pass' if ok else 'FAIL'}")
        return EXIT_OK if ok else EXIT_CHECK
    if kind == "cancellation":
        deltas = [float(d) for d in args.deltas.split(",")]
        rows = harness.energy_cancellation_check(args.sdot, deltas)
        lead = [(1.0 / 6.0) * (3.0 * args.sdot) ** (5.0 / 3.0)
                * abs(math.log(r.delta)) ** (2.0 / 3.0) for r in rows]
        for r, ld in zip(rows, lead):
            print(f"delta={r.delta:g} term1={r.term1:.6g} term2={r.term2:.6g} "
                  f"difference={r.difference:.6g} leading={ld:.6g}")
        ok = True
        if len(rows) >= 2:
            # shared |ln delta|^(2/3) coefficient, from first/last increments
            l23 = [abs(math.log(r.delta)) ** (2.0 / 3.0) for r in rows]
            span = l23[-1] - l23[0]
            c_ref = (1.0 / 6.0) * (3.0 * args.sdot) ** (5.0 / 3.0)
            c1 = (rows[-1].term1 - rows[0].term1) / span
            c2 = (rows[-1].term2 - rows[0].term2) / span
            ok &= abs(c1 / c_ref - 1.0) < 0.05 and abs(c2 / c_ref - 1.0) < 0.05
            print(f"coefficients: term1 {c1:.6g}, term2 {c2:.6g}, shared target {c_ref:.6g}")
            diffs = [r.difference for r in rows]
            mean = 0.5 * abs(diffs[0] + diffs[-1])
            ok &= abs(diffs[0] - diffs[-1]) <= 0.2 * mean if mean > 0 else True
        print("pass" if ok else "FAIL")
        return EXIT_OK if ok else EXIT_CHECK
    if kind == "nomove":
        cfg = harness.default_nomove_config(gamma=args.gamma, N=args.nodes)
        drift = harness.nomove_check(cfg, t_end=args.t_end)
        dxi = cfg.grid.dxi
        ok = drift < dxi
        print(f"drift={drift:.6g} cell={dxi:.6g} -> {'pass' if ok else 'FAIL'}")
        return EXIT_OK if ok else EXIT_CHECK
    if kind == "typeb-profile":
        blocks = csvio.read_profile_csv(args.profile)
        t, xi, h = blocks[-1]
        width = args.epsilon * (-math.log(args.epsilon)) ** (-1.0 / 3.0)
        m = (xi >= 10.0 * width) & (xi <= 0.1)
        if not m.any():
            raise ConfigError("matching window is empty for this profile")
        ref = model.typeb_profile(xi[m], args.sdot)
        dev = float(np.max(np.abs(h[m] - ref) / ref))
        ok = dev < args.tol
        print(f"max relative deviation={dev:.4f} threshold={args.tol} -> "
              f"{'pass' if ok else 'FAIL'}")
        return EXIT_OK if ok else EXIT_CHECK
    raise ConfigError(f"unknown check {kind!r}")


def _build_parser():
    ap = argparse.ArgumentParser(prog="thinfilm",
                                 description="thin-film contact-line laboratory")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--quiet", action="store_true", help="suppress progress output")
    ap.add_argument("--threads", type=int, default=1,
                    help="parallel member runs inside sweeps")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="time-dependent solver run")
    p_run.add_argument("--config", help="config file (dotted-key text or JSON)")
    p_run.add_argument("--out", help="output directory")
    p_run.set_defaults(func=cmd_run)

    p_sw = sub.add_parser("sweep", help="slip-length sweep of a speed law")
    p_sw.add_argument("--config", help="base config file")
    p_sw.add_argument("--out", help="output directory")
    p_sw.add_argument("--law", required=True, help="cox_voinov | tanner | typeb")
    p_sw.add_argument("--eps", required=True, help="comma list, e.g. 1e-2,1e-3,1e-4")
    p_sw.set_defaults(func=cmd_sweep)

    p_ode = sub.add_parser("ode", help="inner-region ODE tools")
    ode_sub = p_ode.add_subparsers(dest="ode_command", required=True)
    q = ode_sub.add_parser("qgamma")
    q.add_argument("--y", type=float, required=True)
    q.add_argument("--gamma", type=float, required=True)
    q.add_argument("--n", type=float, required=True)
    sh = ode_sub.add_parser("shoot")
    sh.add_argument("--eta0", type=float, default=1e-3)
    sh.add_argument("--eta-max", dest="eta_max", type=float, default=1e4)
    sh.add_argument("--tol", type=float, default=1e-12)
    sh.add_argument("--out")
    inn = ode_sub.add_parser("inner")
    inn.add_argument("--n", type=float, default=2.0)
    inn.add_argument("--theta", type=float, required=True)
    inn.add_argument("--sdot", type=float, required=True)
    inn.add_argument("--y0", type=float, default=1e-3)
    inn.add_argument("--ymax", type=float, default=100.0)
    ph = ode_sub.add_parser("phi")
    ph.add_argument("--n", type=float, required=True)
    ph.add_argument("--gamma", type=float, required=True)
    ph.add_argument("--sdot", type=float, required=True)
    ph.add_argument("--xi", type=float, required=True)
    ph.add_argument("--phi2-seed", dest="phi2_seed", type=float, default=None)
    ba = ode_sub.add_parser("basis")
    ba.add_argument("--regime", required=True)
    wv = ode_sub.add_parser("wave")
    wv.add_argument("--n", type=float, default=2.0)
    wv.add_argument("--epsilon", type=float, default=1e-3)
    wv.add_argument("--sign", type=int, choices=(1, -1), default=1)
    wv.add_argument("--xi0", type=float, default=1e-2)
    wv.add_argument("--ximax", type=float, default=10.0)
    wv.add_argument("--seeds", default="0.01,1.0,0.0", help="h,h',h'' at xi0")
    p_ode.set_defaults(func=cmd_ode)

    p_ck = sub.add_parser("check", help="verification checks")
    ck_sub = p_ck.add_subparsers(dest="check_command", required=True)
    li = ck_sub.add_parser("log-integral")
    li.add_argument("--delta", type=float, required=True)
    en = ck_sub.add_parser("energy")
    en.add_argument("--traj", required=True, help="diagnostics CSV of a stored run")
    en.add_argument("--tol", type=float, default=1e-6)
    ca = ck_sub.add_parser("cancellation")
    ca.add_argument("--sdot", type=float, default=1.0 / 3.0)
    ca.add_argument("--deltas", default="1e-4,1e-6,1e-8")
    nm = ck_sub.add_parser("nomove")
    nm.add_argument("--gamma", type=float, default=1.0)
    nm.add_argument("--nodes", type=int, default=256)
    nm.add_argument("--t-end", dest="t_end", type=float, default=1.0)
    tb = ck_sub.add_parser("typeb-profile")
    tb.add_argument("--profile", required=True, help="profile CSV")
    tb.add_argument("--sdot", type=float, required=True)
    tb.add_argument("--epsilon", type=float, required=True)
    tb.add_argument("--tol", type=float, default=0.15)
    p_ck.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    ap = _build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DomainError, RegimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except CheckFailure as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
