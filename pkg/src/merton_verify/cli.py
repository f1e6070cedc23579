"""Command-line interface.

Every subcommand reads a JSON config (flat market/agent keys ``r, mu,
sigma, R, delta``, or nested ``market``/``agent`` objects, plus optional
``sim`` and command options) and prints a JSON result. Exit codes: 0 on
success, 2 for invalid input, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import closed_form as cf
from . import hjb
from .errors import (ConcavityError, IllPosedError, ParameterError, PolicyError,
                     RootFindingError)
from .market import classify, numeraire_shift, params_from_dict, params_to_dict

_NUM = {"type": "number"}
_POLICY = {
    "type": "object",
    "properties": {"type": {"enum": ["optimal", "constant"]}, "pi": _NUM, "xi": _NUM},
    "required": ["type"],
}
CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "r": _NUM, "mu": _NUM, "sigma": _NUM, "R": _NUM, "delta": _NUM,
        "market": {"type": "object", "properties": {"r": _NUM, "mu": _NUM, "sigma": _NUM},
                   "required": ["r", "mu", "sigma"]},
        "agent": {"type": "object", "properties": {"R": _NUM, "delta": _NUM},
                  "required": ["R", "delta"]},
        "x": _NUM,
        "sim": {
            "type": "object",
            "properties": {
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "n_paths": {"type": "integer", "minimum": 1},
                "dt": _NUM, "horizon": _NUM, "antithetic": {"type": "boolean"},
                "csv_paths": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "policy": _POLICY,
        "suboptimal": {"type": "array", "items": {
            "type": "object", "properties": {"pi": _NUM, "xi": _NUM}, "required": ["pi", "xi"]}},
        "x_grid": {"type": "array", "items": _NUM, "minItems": 1},
        "eps": _NUM, "zeta": _NUM, "gamma": _NUM,
        "gammas": {"type": "array", "items": _NUM},
        "P": {"type": "array", "items": _NUM, "minItems": 1},
        "which": {"enum": ["wild", "fast"]},
        "probe_times": {"type": "array", "items": _NUM},
    },
}

DEFAULT_X_GRID = [0.1, 0.5, 1.0, 2.0, 10.0]


def _num(v):
    v = float(v)
    if math.isfinite(v):
        return v
    return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def load_config(path: str | None) -> dict:
    if path is None:
        raise ParameterError("a config file is required")
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParameterError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ParameterError(f"config is not valid JSON: {exc}") from None
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ParameterError(f"config schema: {exc.message}") from None
    flat = dict(doc)
    flat.update(doc.get("market", {}))
    flat.update(doc.get("agent", {}))
    return flat


def _sim_config(cfg: dict, args, default_horizon: float, default_dt: float = 0.01,
                default_paths: int = 10_000):
    from .paths import SimConfig
    s = dict(cfg.get("sim", {}))
    for key, val in (("seed", args.seed), ("n_paths", args.paths), ("dt", args.dt),
                     ("horizon", args.horizon)):
        if val is not None:
            s[key] = val
    dt = float(s.get("dt", default_dt))
    if "horizon" not in s and math.isfinite(dt) and dt > 0:
        # defaulted horizons are rounded up to a whole number of steps
        default_horizon = math.ceil(default_horizon / dt - 1e-9) * dt
    return SimConfig(seed=int(s.get("seed", 0)), n_paths=int(s.get("n_paths", default_paths)),
                     dt=dt, horizon=float(s.get("horizon", default_horizon)),
                     antithetic=bool(s.get("antithetic", True)))


def _write(args, name: str, text: str):
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / name, "w", newline="\n") as fh:
            fh.write(text)


def _emit(args, result: dict, csv_text: str | None = None, csv_name: str = "paths.csv"):
    text = dumps(result)
    _write(args, "result.json", text)
    if csv_text is not None:
        _write(args, csv_name, csv_text)
    if args.format == "csv" and csv_text is not None:
        sys.stdout.write(csv_text)
    else:
        sys.stdout.write(text)


# -- commands ----------------------------------------------------------------------

def cmd_solve(cfg, args):
    m, a = params_from_dict(cfg)
    cls = classify(m, a)
    out = {"classification": cls.kind.value, "eta_or_delta": cls.eta}
    if cls.is_well_posed:
        sol = cf.merton_solution(m, a)
        xs = cfg.get("x_grid", DEFAULT_X_GRID)
        out.update(pi_hat=sol.pi_hat, xi_hat=sol.xi_hat, utility=sol.utility_kind,
                   value_samples=[{"x": float(x), "value": float(sol.value_at(x))} for x in xs])
    _emit(args, out)


def cmd_verify_hjb(cfg, args):
    m, a = params_from_dict(cfg)
    sol = cf.merton_solution(m, a)
    xs = cfg.get("x_grid", DEFAULT_X_GRID)
    out = {"x_grid": [float(x) for x in xs],
           "hjb_residual": hjb.hjb_residual(sol, xs, m, a)}
    # a wrong consumption rate must be detected
    wrong = cf.ClosedFormSolution(sol.pi_hat, sol.xi_hat * 1.1, sol.utility_kind, sol.R,
                                  sol.delta, sol.r, sol.lam)
    out["negative_control_residual"] = hjb.hjb_residual(wrong, xs, m, a)
    if not a.is_log:
        eps = float(cfg.get("eps", 0.1))
        rows = []
        for x in xs:
            z = x + eps
            vb = hjb.value_bundle(sol, z)
            best = hjb.maximize_L(z, vb, m, a)
            rows.append(best.L_star / max(1.0, abs(vb.v)))
        out["perturbed_sup_scaled_max"] = float(max(rows))
    zeta = float(cfg.get("zeta", 0.5))
    dn = [hjb.davis_norman_residual(zeta, x, m, a) for x in xs]
    out["davis_norman"] = {"zeta": zeta, "residual_max": float(max(abs(v) for v in dn)),
                           "sup_L": [float(hjb.davis_norman_sup(zeta, x, m, a)) for x in xs],
                           "bound": [float(-m.r * zeta * sol.value_dx(x + zeta)) for x in xs]}
    _emit(args, out)


def _policy(cfg, m, a):
    from .paths import ConstantProportional, optimal_policy
    spec = cfg.get("policy", {"type": "optimal"})
    if spec["type"] == "optimal":
        return optimal_policy(m, a)
    if "pi" not in spec or "xi" not in spec:
        raise ParameterError("constant policy needs pi and xi")
    return ConstantProportional(float(spec["pi"]), float(spec["xi"]))


def cmd_simulate(cfg, args):
    from .paths import SimConfig, default_horizon, mc_value, simulate_constant_policy
    m, a = params_from_dict(cfg)
    x = float(cfg.get("x", 1.0))
    pol = _policy(cfg, m, a)
    sim = _sim_config(cfg, args, default_horizon(pol.pi, pol.xi, m, a))
    est = mc_value(x, pol, sim, m, a)
    try:
        target = float(cf.constant_policy_value(pol.pi, pol.xi, x, m, a))
    except ParameterError:
        target = math.nan
    out = {"policy": {"pi": pol.pi, "xi": pol.xi}, "x": x,
           "sim": {"seed": sim.seed, "n_paths": sim.n_paths, "dt": sim.dt,
                   "horizon": sim.horizon, "antithetic": sim.antithetic},
           "estimate": est.to_json(), "n_effective": est.n_effective,
           "divergent": est.divergent, "warning": est.warning, "closed_form": _num(target)}
    k = int(cfg.get("sim", {}).get("csv_paths", min(sim.n_paths, 4)))
    csv_text = None
    if k > 0:
        k += k % 2 if sim.antithetic else 0
        small = SimConfig(sim.seed, k, sim.dt, sim.horizon, sim.antithetic)
        csv_text = simulate_constant_policy(x, pol.pi, pol.xi, small, m, a).to_csv()
    _emit(args, out, csv_text)


def cmd_counterexample(cfg, args):
    from .counterexamples import (DEFAULT_PROBES, counterexample_fast_consumption,
                                  counterexample_wild)
    m, a = params_from_dict(cfg)
    which = args.which or cfg.get("which", "wild")
    x = float(cfg.get("x", 1.0))
    sim = _sim_config(cfg, args, 1.0, default_dt=1e-5, default_paths=10_000)
    probes = cfg.get("probe_times", list(DEFAULT_PROBES))
    fn = counterexample_wild if which == "wild" else counterexample_fast_consumption
    res = fn(x, sim, m, a, probe_times=probes)
    out = {"which": which, "x": x, "stats": res.stats.to_json(),
           "probes": [{"t": t, "estimate": e.to_json()} for t, e in zip(res.probe_times, res.probes)]}
    if which == "fast":
        out["pi_bound_ok"] = bool(res.stats.max_pi <= 1.0)
    _emit(args, out, res.batch.to_csv())


def cmd_dual(cfg, args):
    from .dual import dual_report
    from .paths import ConstantProportional
    m, a = params_from_dict(cfg)
    x = float(cfg.get("x", 1.0))
    sim = _sim_config(cfg, args, 400.0, default_dt=0.05, default_paths=10_000)
    subs = [ConstantProportional(float(p["pi"]), float(p["xi"]))
            for p in cfg.get("suboptimal", [{"pi": 0.5, "xi": 0.05}])]
    reports = dual_report(x, sim, m, a, subs)
    _emit(args, {"checks": [r.to_json() for r in reports],
                 "all_pass": all(r.passed for r in reports)})


def _numeraire_one(m, a, gamma):
    from .market import eta
    m2, a2 = numeraire_shift(m, a, gamma)
    if a.is_log:
        e1, e2 = a.delta, a2.delta
    else:
        e1, e2 = eta(m, a), eta(m2, a2)
    match = math.isclose(e1, e2, rel_tol=1e-12, abs_tol=1e-15)
    return {"gamma": gamma, "original": params_to_dict(m, a),
            "shifted": params_to_dict(m2, a2), "eta_both": [e1, e2], "match": match}


def cmd_numeraire(cfg, args):
    m, a = params_from_dict(cfg)
    if args.gamma is not None or "gamma" in cfg or "gammas" not in cfg:
        g = args.gamma if args.gamma is not None else float(cfg.get("gamma", 0.0))
        out = _numeraire_one(m, a, g)
    else:
        sweep = [_numeraire_one(m, a, float(g)) for g in cfg["gammas"]]
        out = {"sweep": sweep, "match": all(s["match"] for s in sweep)}
    _emit(args, out)


def cmd_klss(cfg, args):
    m, a = params_from_dict(cfg)
    x = float(cfg.get("x", 1.0))
    Ps = [float(p) for p in cfg.get("P", [-1e2, -1e4, -1e6, -1e8])]
    v_hat = float(cf.merton_solution(m, a).value_at(x))
    lines = ["P,x,value,consumption,inversion_residual\n"]
    values = []
    for P in Ps:
        bv = cf.bankruptcy_value(P, m, a)
        c = bv.consumption_at(x)
        v = float(bv.value_from_consumption(c))
        res = float(bv.inversion_residual(x))
        values.append(v)
        lines.append(f"{P:.17g},{x:.17g},{v:.17g},{c:.17g},{res:.17g}\n")
    order = np.argsort(Ps)[::-1]  # from mild to severe bankruptcy penalty
    seq = [values[i] for i in order]
    monotone = all(b < a_ for a_, b in zip(seq, seq[1:]))
    x0 = 1e-9
    boundary = [{"P": P, "value_near_zero": float(cf.bankruptcy_value(P, m, a).value_at(x0))}
                for P in Ps]
    out = {"x": x, "v_hat": v_hat, "values": [{"P": P, "value": v} for P, v in zip(Ps, values)],
           "monotone_decreasing": monotone,
           "rel_gap_most_severe": abs(seq[-1] - v_hat) / abs(v_hat),
           "boundary_probe_x": x0, "boundary_probe": boundary}
    _emit(args, out, "".join(lines), "klss.csv")


COMMANDS = {
    "solve": cmd_solve, "verify-hjb": cmd_verify_hjb, "simulate": cmd_simulate,
    "counterexample": cmd_counterexample, "dual": cmd_dual, "numeraire": cmd_numeraire,
    "klss": cmd_klss,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="merton-verify",
                                description="Verification tools for the Merton problem.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("config_path", nargs="?", help="JSON config file")
    p.add_argument("--config", dest="config_opt", help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--paths", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--out-dir")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--which", choices=["wild", "fast"])
    p.add_argument("--gamma", type=float)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        cfg = load_config(args.config_opt or args.config_path)
        COMMANDS[args.command](cfg, args)
    except (ParameterError, IllPosedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RootFindingError, ConcavityError, PolicyError, FloatingPointError,
            ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
