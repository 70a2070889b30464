"""JSON scenario files, named plant presets and the synthesize, verify and
report pipeline behind the command line."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .canonical import ReducedForm, decompose_stabilizable, validate_reduced_form
from .errors import ConfigError
from .feedback import (
    BoundSpec,
    ClosedLoop,
    GainSchedule,
    feedback_from_dict,
    synthesize,
    synthesize_multi,
)
from .linalg import A0, B0, LinearSystem, spectral_profile
from .simulate import integrate
from .verify import (
    SissTestSpec,
    check_p_bounded,
    make_battery,
    run_battery,
    siss_l_test,
    tune_gains,
    tune_multi,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def integrator_chain(n: int) -> LinearSystem:
    A = np.diag(np.ones(n - 1), 1) if n > 1 else np.zeros((1, 1))
    b = np.zeros(n)
    b[-1] = 1.0
    return LinearSystem(A, b)


def oscillator(omega: float = 1.0) -> LinearSystem:
    return LinearSystem(omega * A0, B0)


def mixed_4d() -> LinearSystem:
    """Two resonant rotations coupled by the identity, driven through the last state."""
    A = np.block([[A0, np.eye(2)], [np.zeros((2, 2)), A0]])
    return LinearSystem(A, [0.0, 0.0, 0.0, 1.0])


def two_block() -> ReducedForm:
    """Oscillator on top of a double integrator, coupled through state and input."""
    return ReducedForm(
        blocks=[(A0, B0), (np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([0.0, 1.0]))],
        coupling={(0, 1): (np.array([[0.0, 0.0], [0.5, 0.0]]), np.array([0.0, 0.5]))},
    )


PRESETS = {
    "scalar": lambda cfg: integrator_chain(1),
    "double-integrator": lambda cfg: integrator_chain(2),
    "integrator-chain": lambda cfg: integrator_chain(int(cfg.get("n", 3))),
    "oscillator": lambda cfg: oscillator(float(cfg.get("omega", 1.0))),
    "mixed-4d": lambda cfg: mixed_4d(),
    "two-block": lambda cfg: two_block(),
}


@dataclass
class Scenario:
    """Everything a pipeline run needs; see :func:`load_scenario` for the file format."""

    system: dict
    bounds: BoundSpec
    name: str = "scenario"
    gains: list | None = None
    exponent: float | None = None
    battery: dict = field(default_factory=lambda: {"count": 20, "radius": 100.0, "seed": 1})
    validation: dict = field(default_factory=lambda: {"count": 50, "radius": 100.0, "seed": 2})
    siss: dict | None = None
    simulation: dict = field(default_factory=dict)
    tuning: dict = field(default_factory=dict)
    trajectories: int = 3
    seed: int = 0
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "Scenario":
        if not isinstance(d, dict):
            raise ConfigError("scenario must be a JSON object")
        ver = d.get("schema_version")
        if ver != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {ver!r}; expected {SCHEMA_VERSION}")
        if "system" not in d or "bounds" not in d:
            raise ConfigError("scenario needs 'system' and 'bounds'")
        try:
            bounds = BoundSpec.from_dict(d["bounds"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid bounds: {exc}") from exc
        known = {"schema_version", "system", "bounds", "name", "gains", "exponent", "battery",
                 "validation", "siss", "simulation", "tuning", "trajectories", "seed"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys {sorted(unknown)}")
        sc = cls(system=d["system"], bounds=bounds, name=d.get("name", "scenario"),
                 gains=d.get("gains"), exponent=d.get("exponent"), siss=d.get("siss"),
                 simulation=d.get("simulation", {}), tuning=d.get("tuning", {}),
                 trajectories=int(d.get("trajectories", 3)), seed=int(d.get("seed", 0)),
                 base_dir=Path(base_dir) if base_dir else Path.cwd())
        if "battery" in d:
            sc.battery = {**sc.battery, **d["battery"]}
        if "validation" in d:
            sc.validation = {**sc.validation, **d["validation"]}
        sc.resolve_system()  # fail early on bad references
        return sc

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "name": self.name, "system": self.system,
                "bounds": self.bounds.to_dict(), "gains": self.gains, "exponent": self.exponent,
                "battery": self.battery, "validation": self.validation, "siss": self.siss,
                "simulation": self.simulation, "tuning": self.tuning,
                "trajectories": self.trajectories, "seed": self.seed}

    def resolve_system(self):
        """A :class:`LinearSystem` or, for multi-input plants, a :class:`ReducedForm`."""
        s = self.system
        if not isinstance(s, dict):
            raise ConfigError("'system' must be an object")
        if "preset" in s:
            name = s["preset"]
            if name not in PRESETS:
                raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
            return PRESETS[name](s)
        if "reduced_form" in s:
            ref = s["reduced_form"]
            if isinstance(ref, str):
                path = (self.base_dir / ref) if not Path(ref).is_absolute() else Path(ref)
                if not path.exists():
                    raise ConfigError(f"reduced-form file {path} not found")
                ref = json.loads(path.read_text())
            return ReducedForm.from_dict(ref)
        if "A" in s and "B" in s:
            try:
                return LinearSystem(np.array(s["A"], dtype=float), np.array(s["B"], dtype=float))
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"invalid inline matrices: {exc}") from exc
        raise ConfigError("'system' needs a preset, a reduced_form or inline A and B")

    def battery_states(self, n: int, which: str = "battery", seed_offset: int = 0) -> np.ndarray:
        spec = self.battery if which == "battery" else self.validation
        return make_battery(n, int(spec.get("count", 20)), float(spec.get("radius", 100.0)),
                            int(spec.get("seed", 0)) + self.seed + seed_offset)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return Scenario.from_dict(data, base_dir=path.parent)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_jsonable))


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"cannot serialize {type(o)}")


@dataclass
class Synthesis:
    system: LinearSystem
    feedback: object
    tuning: dict | None
    canonical: dict | None

    @property
    def closed_loop(self) -> ClosedLoop:
        return ClosedLoop(self.system, self.feedback)


def synthesize_scenario(sc: Scenario) -> Synthesis:
    """Spectral check, decomposition, canonical form and gains (tuned unless given)."""
    plant = sc.resolve_system()
    tune_kw = {k: float(v) for k, v in sc.tuning.items()
               if k in ("horizon", "max_horizon", "rtol", "atol", "decay")}
    if isinstance(plant, ReducedForm):
        report = validate_reduced_form(plant)
        if not report.valid:
            raise ConfigError("invalid reduced form: " + "; ".join(report.violations))
        A, _ = plant.assemble()
        spectral_profile(A)
        if sc.gains is not None:
            gains = [GainSchedule(tuple(g)) for g in sc.gains]
            sys, fb = synthesize_multi(plant, gains, sc.bounds.p, sc.exponent)
            return Synthesis(sys, fb, None, None)
        n = A.shape[0]
        rep = tune_multi(plant, sc.bounds, sc.battery_states(n), exponent=sc.exponent, **tune_kw)
        sys, fb = synthesize_multi(plant, rep.gains, sc.bounds.p, sc.exponent)
        return Synthesis(sys, fb, rep.to_dict(), None)
    if plant.m != 1:
        raise ConfigError("multi-input plants must be given as a reduced_form")
    spectral_profile(plant.A)
    dec = decompose_stabilizable(plant.A, plant.B[:, 0])
    tuning = None
    if dec.profile.mu == 0:
        gains = GainSchedule(())
    elif sc.gains is not None:
        gains = GainSchedule(tuple(sc.gains))
    else:
        rep = tune_gains(plant, sc.bounds, sc.battery_states(plant.n), **tune_kw)
        gains = rep.gains
        tuning = rep.to_dict()
    fb = synthesize(plant, gains, decomposition=dec)
    canonical = None
    if fb.law is not None:
        cf = fb.law.canonical
        canonical = {**cf.to_dict(), "decomposition": dec.M.tolist(), "gains": gains.to_list()}
    return Synthesis(plant, fb, tuning, canonical)


def write_synthesis(syn: Synthesis, out: Path, dump_canonical=None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "feedback.json", {"system": syn.system.to_dict(),
                                        "feedback": syn.feedback.to_dict()})
    if syn.tuning is not None:
        _write_json(out / "tuning.json", syn.tuning)
    if syn.canonical is not None:
        _write_json(Path(dump_canonical) if dump_canonical else out / "canonical.json", syn.canonical)


def load_feedback(path):
    """``(LinearSystem, feedback)`` from a file written by :func:`write_synthesis`."""
    try:
        d = json.loads(Path(path).read_text())
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read feedback file {path}: {exc}") from exc
    return LinearSystem.from_dict(d["system"]), feedback_from_dict(d["feedback"])


def verify_scenario(sc: Scenario, out: Path, syn: Synthesis | None = None,
                    horizon: float | None = None, rtol: float | None = None,
                    atol: float | None = None, jet_order: int | None = None,
                    figures: bool = True) -> dict:
    """Run the validation battery, the p-bounded check and the optional SISS_L test.

    Writes ``certificate.json``, ``battery.csv``, sample trajectories, a
    ``siss.json`` when configured, ``summary.txt`` and figures into ``out``.
    Returns the summary dictionary; ``summary["ok"]`` is the overall verdict.
    """
    out.mkdir(parents=True, exist_ok=True)
    syn = syn or synthesize_scenario(sc)
    cl = syn.closed_loop
    p = sc.bounds.p
    simcfg = sc.simulation
    horizon = float(horizon if horizon is not None else simcfg.get("horizon", 200.0))
    rtol = float(rtol if rtol is not None else simcfg.get("rtol", 1e-6))
    atol = float(atol if atol is not None else simcfg.get("atol", 1e-9))
    order = p if jet_order is None else int(jet_order)
    bat = sc.battery_states(cl.n, "validation")
    res = run_battery(cl, bat, max(order, p), horizon=horizon,
                      max_horizon=float(simcfg.get("max_horizon", 5e4)), rtol=rtol, atol=atol)
    cert = check_p_bounded(res, sc.bounds)
    _write_json(out / "certificate.json", {**cert.to_dict(), "battery": res.to_dict()})
    _write_battery_csv(out / "battery.csv", res)

    trajs = []
    for k, x0 in enumerate(bat[: sc.trajectories]):
        # follow each sample start as long as the battery run needed to decay
        tr = integrate(cl, x0, float(max(horizon, res.horizon[k])), rtol=rtol, atol=atol,
                       jet_order=order)
        tr.meta["seed"] = sc.seed
        tr.to_csv(out / f"trajectory_{k}.csv")
        trajs.append(tr)

    summary = {"name": sc.name, "seed": sc.seed, "p": p, "R": list(sc.bounds.R),
               "feedback": syn.feedback.kind, "certificate": cert.to_dict(),
               "jacobian_max_real": float(np.max(cl.linearization_spectrum().real))}
    gains = getattr(syn.feedback, "gains", None)
    if gains is not None:
        summary["gains"] = gains.to_list()
    elif hasattr(syn.feedback, "blocks"):
        summary["gains"] = [b.gains.to_list() if b.gains else [] for b in syn.feedback.blocks]
    ok = cert.passed
    if sc.siss:
        spec = SissTestSpec(delta=float(sc.siss["delta"]),
                            N_candidate=sc.siss.get("N"),
                            families=tuple(sc.siss.get("families", SissTestSpec.families)),
                            horizon=float(sc.siss.get("horizon", 200.0)),
                            seed=int(sc.siss.get("seed", sc.seed)))
        siss_bat = bat[: int(sc.siss.get("count", 10))]
        rep = siss_l_test(cl, spec, siss_bat)
        _write_json(out / "siss.json", rep.to_dict())
        summary["siss"] = {"passed": rep.passed, "worst_ratio": rep.worst_ratio}
        ok = ok and rep.passed
    summary["ok"] = bool(ok)
    _write_json(out / "summary.json", summary)
    (out / "summary.txt").write_text(format_summary(summary))
    if figures:
        from . import plots
        plots.battery_figure(res, sc.bounds, out / "battery.png")
        for k, tr in enumerate(trajs):
            plots.trajectory_figure(tr, sc.bounds, out / f"trajectory_{k}.png")
    return summary


def _write_battery_csv(path: Path, res) -> None:
    N, q = res.sup_abs.shape
    header = ([f"x0_{i + 1}" for i in range(res.x0.shape[1])]
              + [f"sup_U_d{j}" for j in range(q)] + ["trailing_norm", "horizon", "converged"])
    rows = np.hstack([res.x0, res.sup_abs, res.trailing_norm[:, None], res.horizon[:, None],
                      res.converged[:, None].astype(float)])
    np.savetxt(path, rows, delimiter=",", header=",".join(header), comments="")


def read_battery_csv(path) -> dict:
    data = np.genfromtxt(path, delimiter=",", names=True)
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}


def format_summary(summary: dict) -> str:
    c = summary["certificate"]
    lines = [f"scenario      {summary['name']}",
             f"feedback      {summary['feedback']}",
             f"gains         {summary.get('gains')}",
             f"bounds        p={summary['p']} R={summary['R']}",
             f"worst sups    {['%.6g' % v for v in c['worst']]}",
             f"violations    {c['violations']}",
             f"all decayed   {c['all_converged']}",
             f"linearization max Re = {summary['jacobian_max_real']:.6g}"]
    if "siss" in summary:
        lines.append(f"SISS_L        passed={summary['siss']['passed']} "
                     f"worst ratio={summary['siss']['worst_ratio']:.6g}")
    lines.append(f"verdict       {'PASS' if summary['ok'] else 'FAIL'}")
    return "\n".join(lines) + "\n"


def run_scenario(config, out=None, seed: int | None = None, **verify_kw) -> int:
    """Full pipeline for a config file; returns 0 when certified and 1 otherwise.

    Errors from any stage propagate so the caller can report them.
    """
    sc = config if isinstance(config, Scenario) else load_scenario(config)
    if seed is not None:
        sc.seed = int(seed)
    out = Path(out) if out is not None else Path("out") / sc.name
    syn = synthesize_scenario(sc)
    write_synthesis(syn, out)
    summary = verify_scenario(sc, out, syn=syn, **verify_kw)
    log.info("scenario %s: %s", sc.name, "certified" if summary["ok"] else "failed")
    return 0 if summary["ok"] else 1
