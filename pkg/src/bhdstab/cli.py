"""Command line front end: ``bhdstab <command> [options]``.

Exit status is 0 on success, 1 when a certificate or acceptance check
fails and 2 on configuration or numerical errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import BHDError

log = logging.getLogger("bhdstab")


def _float_list(text: str) -> list:
    return [float(v) for v in text.replace(",", " ").split()]


def _common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required, help="scenario JSON file")
    p.add_argument("--out", help="output directory (default: out/<scenario name>)")
    p.add_argument("--seed", type=int, help="offset added to every battery seed")


def _sim_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--horizon", type=float, help="simulation horizon")
    p.add_argument("--rtol", type=float, help="integrator relative tolerance")
    p.add_argument("--atol", type=float, help="integrator absolute tolerance")
    p.add_argument("--jet-order", type=int, help="highest control derivative recorded")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bhdstab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="build the feedback (tuning gains when none are given)")
    _common(p)
    p.add_argument("--dump-canonical", metavar="PATH",
                   help="write the canonical form (J, bhat, T, theta) to PATH")

    p = sub.add_parser("verify", help="synthesize, run the battery and write certificates")
    _common(p)
    _sim_opts(p)
    p.add_argument("--feedback", metavar="PATH", help="use a feedback.json instead of synthesizing")
    p.add_argument("--no-figures", action="store_true", help="skip PNG output")

    p = sub.add_parser("simulate", help="simulate one closed-loop trajectory")
    _common(p, config_required=False)
    _sim_opts(p)
    p.add_argument("--feedback", metavar="PATH", help="feedback.json to simulate")
    p.add_argument("--x0", type=_float_list, help="initial state, e.g. '1,0,-2'")

    p = sub.add_parser("counterexample", help="control-rate growth of a saturated linear law")
    p.add_argument("--out", default="out/counterexample")
    p.add_argument("--omega", type=float, default=2.0)
    p.add_argument("--k", type=_float_list, default=[1.0, 2.0])
    p.add_argument("--l", type=_float_list, default=[1.0, 2.0, 4.0, 8.0, 16.0])
    p.add_argument("--sigma", choices=["tanh", "arctan"], default="tanh")
    p.add_argument("--horizon", type=float, default=200.0)
    p.add_argument("--rtol", type=float, default=1e-6)
    p.add_argument("--atol", type=float, default=1e-9)

    p = sub.add_parser("reproduce-all", help="run the acceptance experiments")
    p.add_argument("--list", action="store_true", help="list the experiments without running them")
    p.add_argument("--only", type=int, nargs="+", metavar="ID", help="run a subset")
    p.add_argument("--out", help="write acceptance.json into this directory")
    return ap


def _out_dir(args, sc) -> Path:
    return Path(args.out) if args.out else Path("out") / sc.name


def _load(args):
    from .scenario import load_scenario

    sc = load_scenario(args.config)
    if args.seed is not None:
        sc.seed = args.seed
    return sc


def cmd_synthesize(args) -> int:
    from .scenario import synthesize_scenario, write_synthesis

    sc = _load(args)
    out = _out_dir(args, sc)
    syn = synthesize_scenario(sc)
    write_synthesis(syn, out, dump_canonical=args.dump_canonical)
    print(f"feedback written to {out / 'feedback.json'}")
    if syn.tuning is not None:
        print(f"tuning status: {syn.tuning['status']}, gains {syn.tuning['gains']}")
        return 0 if syn.tuning["status"] == "certified" else 1
    return 0


def cmd_verify(args) -> int:
    from .scenario import Synthesis, load_feedback, synthesize_scenario, verify_scenario, write_synthesis

    sc = _load(args)
    out = _out_dir(args, sc)
    if args.feedback:
        system, fb = load_feedback(args.feedback)
        syn = Synthesis(system, fb, None, None)
    else:
        syn = synthesize_scenario(sc)
        write_synthesis(syn, out)
    summary = verify_scenario(sc, out, syn=syn, horizon=args.horizon, rtol=args.rtol,
                              atol=args.atol, jet_order=args.jet_order, figures=not args.no_figures)
    print((out / "summary.txt").read_text(), end="")
    return 0 if summary["ok"] else 1


def cmd_simulate(args) -> int:
    from . import plots
    from .feedback import ClosedLoop
    from .scenario import load_feedback, synthesize_scenario
    from .simulate import integrate

    if not args.feedback and not args.config:
        raise SystemExit("simulate needs --config or --feedback")
    sc = _load(args) if args.config else None
    if args.feedback:
        system, fb = load_feedback(args.feedback)
    else:
        syn = synthesize_scenario(sc)
        system, fb = syn.system, syn.feedback
    cl = ClosedLoop(system, fb)
    if args.x0 is not None:
        x0 = np.asarray(args.x0, dtype=float)
    elif sc is not None:
        x0 = sc.battery_states(cl.n, "validation")[0]
    else:
        x0 = np.ones(cl.n)
    sim = sc.simulation if sc is not None else {}
    p = sc.bounds.p if sc is not None else 1
    order = p if args.jet_order is None else args.jet_order
    tr = integrate(cl, x0, args.horizon or float(sim.get("horizon", 200.0)),
                   rtol=args.rtol or float(sim.get("rtol", 1e-8)),
                   atol=args.atol or float(sim.get("atol", 1e-10)), jet_order=order)
    if args.seed is not None:
        tr.meta["seed"] = args.seed
    out = Path(args.out) if args.out else (Path("out") / (sc.name if sc else "simulate"))
    out.mkdir(parents=True, exist_ok=True)
    tr.to_csv(out / "trajectory.csv")
    plots.trajectory_figure(tr, sc.bounds if sc else None, out / "trajectory.png")
    s = tr.summary(order)
    print(f"final |x| = {s['final_norm']:.6g}, sup |U^(j)| = {['%.6g' % v for v in s['sup_abs']]}")
    print(f"trajectory written to {out / 'trajectory.csv'}")
    return 0


def cmd_counterexample(args) -> int:
    from . import plots
    from .verify import counterexample_growth

    res = counterexample_growth(args.l, args.k, args.omega, args.sigma)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "growth.json").write_text(json.dumps(res, indent=2))
    rows = np.column_stack([res["l"], res["simulated"], res["closed_form"]])
    np.savetxt(out / "growth.csv", rows, delimiter=",", header="l,du0_jet,du0_closed_form",
               comments="")
    plots.growth_figure(res, out / "growth.png")
    for l, s, c in rows:
        print(f"l={l:<8g} du/dt(0) jet={s:+.12g} closed form={c:+.12g}")
    print(f"slope {res['slope']:.12g} (expected {res['expected_slope']:.12g})")
    return 0


def cmd_reproduce_all(args) -> int:
    from .acceptance import CRITERIA, run_all

    if args.list:
        for c in CRITERIA:
            print(f"{c.id:2d}  {c.title:<40s} budget {c.budget:g}s")
        return 0
    results = run_all(ids=set(args.only) if args.only else None, echo=print)
    passed = sum(r.ok for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "acceptance.json").write_text(
            json.dumps([r.to_dict() for r in results], indent=2, default=_plain))
    return 0 if passed == len(results) else 1


def _plain(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


COMMANDS = {"synthesize": cmd_synthesize, "verify": cmd_verify, "simulate": cmd_simulate,
            "counterexample": cmd_counterexample, "reproduce-all": cmd_reproduce_all}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except BHDError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
