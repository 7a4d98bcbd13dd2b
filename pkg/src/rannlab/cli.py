"""Command-line entry point.

Config files are sectioned key = value text whose first line is the header
``rannlab-config 1``.  ``--config default`` uses the built-in defaults, and
``rannlab default-config SUBCOMMAND`` prints them with their provenance.
"""
from __future__ import annotations

import argparse
import configparser
import io
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

HEADER = "rannlab-config 1"
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- value types

def _int(s):
    return int(s)


def _u64(s):
    v = int(s)
    if not 0 <= v < 2 ** 64:
        raise ValueError("must fit in an unsigned 64-bit integer")
    return v


def _pos_float(s):
    v = float(s)
    if not v > 0 or not math.isfinite(v):
        raise ValueError("must be a positive finite number")
    return v


def _nonneg_float(s):
    v = float(s)
    if v < 0 or not math.isfinite(v):
        raise ValueError("must be a nonnegative finite number")
    return v


def _pos_int(s):
    v = int(s)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def _int_list(s):
    vals = [int(v) for v in s.replace(",", " ").split()]
    if not vals:
        raise ValueError("empty list")
    return vals


def _bool(s):
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("must be true or false")


def _auto_float(s):
    return None if s.strip().lower() == "auto" else _pos_float(s)


def _choice(*opts):
    def parse(s):
        low = s.strip().lower()
        if low not in opts:
            raise ValueError(f"must be one of {', '.join(opts)}")
        return low
    return parse


@dataclass(frozen=True)
class Key:
    default: str
    parse: Callable
    note: str = ""


# ---------------------------------------------------------------- schemas

RUN = {
    "seed": Key("0", _u64, "master seed; every random stream derives from it"),
    "threads": Key("1", _pos_int, "worker threads for sweep cells"),
}

SHOCK = {
    "mu": Key("1.0", _pos_float, "viscosity (reference runs)"),
    "eps": Key("1e-3", _pos_float, "capillarity (reference runs)"),
    "gamma": Key("2.0", _pos_float, "pressure exponent (reference runs)"),
    "v_plus": Key("1.5", _pos_float, "far-field volume (reference runs)"),
    "v_minus": Key("1.1", _pos_float, "second far-field state; free closure datum"),
    "velocity_mode": Key("mass", _choice("mass", "paper"),
                         "mass: u = -s v + C from the continuity equation"),
    "xi_min": Key("-5.0", float, "profile grid start"),
    "xi_max": Key("5.0", float, "profile grid end"),
    "grid_points": Key("5000", _pos_int, "profile resolution (reference runs)"),
}

SCHEMAS: Dict[str, Dict[str, Dict[str, Key]]] = {
    "pme-sweep": {
        "run": RUN,
        "problem": {
            "d": Key("1", _pos_int, "space dimension"),
            "m": Key("2.0", _pos_float, "porous medium exponent"),
            "t0": Key("auto", _auto_float, "time shift; auto is 0.1 for d <= 3, else 0.01"),
            "T": Key("1.0", _pos_float, "time horizon; a free choice"),
            "center": Key("0.5", float, "profile centre, same value on every axis"),
            "radius": Key("0.3", _pos_float, "support radius at t0, used when b_const = auto"),
            "b_const": Key("auto", _auto_float, "free profile constant; auto matches radius"),
        },
        "sampler": {"std": Key("10.0", _pos_float, "Fourier frequency std (reference runs)")},
        "ridge": {
            "lam": Key("1e-5", _nonneg_float, "ridge penalty (reference runs)"),
            "jitter": Key("auto", _auto_float, "Cholesky retry jitter"),
        },
        "sweep": {
            "widths": Key("25, 50, 100, 200, 400", _int_list, "network widths (reference runs)"),
            "repeats": Key("5", _pos_int, "independent draws per width (reference runs)"),
            "m_factor": Key("10", _pos_int, "collocation points M = m_factor N (reference runs)"),
            "eval_points": Key("20000", _pos_int, "held-out Monte Carlo points"),
        },
    },
    "cns-sweep": {
        "run": RUN,
        "problem": dict(SHOCK, **{
            "t_max": Key("1.0", _pos_float, "time domain (0, t_max) (reference runs)"),
            "x_min": Key("-5.0", float, "space domain start (reference runs)"),
            "x_max": Key("5.0", float, "space domain end (reference runs)"),
        }),
        "sampler": {"std": Key("3.5", _pos_float, "Fourier frequency std (reference runs)")},
        "ridge": {
            "lam": Key("1e-3", _nonneg_float, "ridge penalty (reference runs)"),
            "jitter": Key("auto", _auto_float, "Cholesky retry jitter"),
        },
        "sweep": {
            "widths": Key("10, 25, 50, 100, 250", _int_list, "network widths (reference runs)"),
            "repeats": Key("5", _pos_int, "independent draws per width (reference runs)"),
            "m_factor": Key("2000", _pos_int, "collocation points M = m_factor N (reference runs)"),
            "eval_points": Key("20000", _pos_int, "held-out Monte Carlo points"),
        },
    },
    "cns-wave": {"run": RUN, "problem": SHOCK},
    "ridgelet-check": {
        "run": RUN,
        "ridgelet": {
            "n": Key("3", _int, "profile order for reconstruction and slice checks"),
            "c": Key("0.08", _pos_float, "Gaussian bump width for reconstruction"),
            "refine": Key("true", _bool, "repeat reconstruction on a twice finer grid"),
            "parseval_orders": Key("0, 1", _int_list, "p = q values for the Parseval check"),
        },
    },
    "estimator-check": {
        "run": RUN,
        "estimator": {
            "seeds": Key("2000", _pos_int, "independent estimators per width"),
            "widths": Key("64, 256", _int_list, "two widths for the variance ratio"),
            "c": Key("0.08", _pos_float, "bump width of the cut-off target"),
            "n": Key("3", _int, "profile order"),
        },
    },
    "theory-report": {
        "run": RUN,
        "theory": {
            "d": Key("1", _pos_int, "space dimension"),
            "n": Key("auto", lambda s: None if s.strip() == "auto" else _int(s),
                     "profile order; auto picks the smallest admissible"),
            "activation": Key("tanh", _choice("tanh", "cos", "sigmoid"), "activation"),
            "T": Key("1.0", _pos_float, "time half-extent"),
            "R": Key("1.0", _pos_float, "space half-extent"),
            "domain_measure": Key("1.0", _pos_float, "measure of the space domain"),
            "lambda_tau": Key("1.0", _pos_float, "heavy-tail exponent in tau"),
            "lambda_a": Key("1.0", _pos_float, "heavy-tail exponent in a"),
        },
    },
}


def default_config_text(command: str) -> str:
    out = [HEADER]
    for sec, keys in SCHEMAS[command].items():
        out.append("")
        out.append(f"[{sec}]")
        for k, key in keys.items():
            line = f"{k} = {key.default}"
            out.append(f"{line:<32}# {key.note}" if key.note else line)
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- parsing

def _line_index(text: str) -> Dict[Tuple[str, str], int]:
    """(section, key) -> 1-based line number in the original text."""
    where, sec = {}, None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line.startswith("[") and line.endswith("]"):
            sec = line[1:-1].strip()
            where[(sec, "")] = no
        elif "=" in line and sec is not None:
            where[(sec, line.split("=", 1)[0].strip())] = no
    return where


def parse_config(text: str, command: str, source: str = "<config>") -> Dict[str, Dict]:
    """Validate config text against the command schema; unknown or malformed
    keys are all reported together with their line numbers."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise ConfigError(f"{source}:1: first line must be '{HEADER}'")
    body = "\n".join(lines[1:])
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None,
                                   default_section="\x00")
    cp.optionxform = str
    try:
        cp.read_string(body, source)
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        where = f"{source}:{lineno + 1}" if lineno else source
        raise ConfigError(f"{where}: {exc.message if hasattr(exc, 'message') else exc}")
    where = _line_index(text)
    schema = SCHEMAS[command]
    errors = []
    for sec in cp.sections():
        if sec not in schema:
            errors.append(f"{source}:{where.get((sec, ''), '?')}: unknown section [{sec}]")
            continue
        for k in cp[sec]:
            if k not in schema[sec]:
                errors.append(f"{source}:{where.get((sec, k), '?')}: unknown key {sec}.{k}")
    raw = {sec: {k: key.default for k, key in keys.items()} for sec, keys in schema.items()}
    for sec in cp.sections():
        for k, v in cp[sec].items():
            if sec in schema and k in schema[sec]:
                raw[sec][k] = v
    out = {}
    for sec, keys in schema.items():
        out[sec] = {}
        for k, key in keys.items():
            try:
                out[sec][k] = key.parse(raw[sec][k])
            except (TypeError, ValueError) as exc:
                errors.append(f"{source}:{where.get((sec, k), '?')}: {sec}.{k} = "
                              f"{raw[sec][k]!r}: {exc}")
        out[sec]["_raw"] = raw[sec]
    if errors:
        raise ConfigError("invalid configuration\n  " + "\n  ".join(errors))
    return out


def apply_overrides(text: str, overrides: List[str]) -> str:
    """Append section.key=value overrides as trailing config sections."""
    if not overrides:
        return text
    extra = []
    for ov in overrides:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ConfigError(f"override {ov!r} is not section.key=value")
        lhs, val = ov.split("=", 1)
        sec, key = lhs.strip().split(".", 1)
        extra.append((sec, key, val.strip()))
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None,
                                   default_section="\x00")
    cp.optionxform = str
    lines = text.splitlines()
    cp.read_string("\n".join(lines[1:]))
    for sec, key, val in extra:
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp[sec][key] = val
    buf = io.StringIO()
    cp.write(buf)
    return HEADER + "\n" + buf.getvalue()


@dataclass
class RunConfig:
    command: str
    values: Dict[str, Dict]
    out: str
    seed: int
    threads: int
    verbose: int = 1
    notes: List[str] = field(default_factory=list)

    def text(self) -> str:
        lines = [HEADER]
        for sec, vals in self.values.items():
            lines.append("")
            lines.append(f"[{sec}]")
            for k, v in vals["_raw"].items():
                if sec == "run" and k == "seed":
                    v = str(self.seed)
                elif sec == "run" and k == "threads":
                    v = str(self.threads)
                lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


def load_run_config(args) -> RunConfig:
    if args.config == "default":
        text, source = default_config_text(args.command), "default"
    else:
        if not os.path.isfile(args.config):
            raise ConfigError(f"config file not found: {args.config}")
        with open(args.config) as fh:
            text, source = fh.read(), args.config
    values = parse_config(text, args.command, source)
    if args.override:
        values = parse_config(apply_overrides(text, args.override), args.command, "--override")
    seed = args.seed if args.seed is not None else values["run"]["seed"]
    threads = args.threads if args.threads is not None else values["run"]["threads"]
    out = args.out or os.path.join("rannlab-out", args.command)
    return RunConfig(args.command, values, out, seed, threads, args.verbose)


# ---------------------------------------------------------------- commands

def _out(rc: RunConfig, name: str) -> str:
    return os.path.join(rc.out, name)


def _log(rc: RunConfig, msg: str) -> None:
    if rc.verbose:
        print(msg, flush=True)


def _ridge(vals):
    from .regress import RidgeConfig
    return RidgeConfig(vals["lam"], vals["jitter"])


def _shock(vals):
    from . import cns
    return cns.ShockParams(mu=vals["mu"], eps=vals["eps"], gamma=vals["gamma"],
                           v_plus=vals["v_plus"], v_minus=vals["v_minus"],
                           xi_range=(vals["xi_min"], vals["xi_max"]),
                           grid_points=vals["grid_points"],
                           velocity_mode=cns.VelocityMode.parse(vals["velocity_mode"]))


def _sweep(rc: RunConfig, problem, tag: str) -> int:
    from . import harness, plots
    v = rc.values
    cfg = harness.SweepConfig(tuple(v["sweep"]["widths"]), problem, v["sweep"]["repeats"],
                              v["sweep"]["m_factor"], _ridge(v["ridge"]), v["sampler"]["std"],
                              v["sweep"]["eval_points"], rc.seed, rc.threads)
    res = harness.run_sweep(cfg)
    harness.write_raw_csv(res, _out(rc, f"{tag}_raw.csv"))
    harness.write_summary_csv(res, _out(rc, f"{tag}_summary.csv"))
    for N, m, s, e in zip(res.widths, res.mean_rel_l2, res.std_rel_l2, res.excluded):
        _log(rc, f"N={N:5d}  mean rel L2 {m:.4e}  std {s:.2e}  excluded {e}")
    if res.fit is None:
        print("too few usable widths for a slope fit", file=sys.stderr)
        return EXIT_NUMERICAL
    _log(rc, f"slope {res.fit.slope:.3f}  95% CI [{res.fit.ci[0]:.3f}, {res.fit.ci[1]:.3f}]")
    plots.loglog_sweep(res, _out(rc, f"{tag}_loglog"), tag)
    return EXIT_OK


def cmd_pme_sweep(rc: RunConfig) -> int:
    from . import harness, pme
    p = rc.values["problem"]
    d = p["d"]
    t0 = p["t0"] or (0.1 if d <= 3 else 0.01)
    b = p["b_const"] or pme.b_const_for_radius(d, p["radius"], t0, p["m"])
    params = pme.BarenblattParams(p["m"], d, b, t0, (p["center"],) * d)
    return _sweep(rc, harness.PmeProblem(params, p["T"]), f"pme_d{d}")


def cmd_cns_sweep(rc: RunConfig) -> int:
    from . import harness
    p = rc.values["problem"]
    problem = harness.CnsProblem(_shock(p), p["t_max"], (p["x_min"], p["x_max"]))
    return _sweep(rc, problem, "cns")


def cmd_cns_wave(rc: RunConfig) -> int:
    from . import cns, plots
    params = _shock(rc.values["problem"])
    prof = cns.integrate_wave(params)
    prof.to_csv(_out(rc, "wave.csv"))
    plots.wave_profile(prof, _out(rc, "wave"))
    _log(rc, f"shock speed s = {params.s:.6f}, {len(prof.xi)} profile rows")
    return EXIT_OK


def cmd_ridgelet_check(rc: RunConfig) -> int:
    from . import harness, plots
    from .ridgelet import FieldGrid
    v = rc.values["ridgelet"]
    rows = []
    grids = [FieldGrid()] + ([FieldGrid().refined()] if v["refine"] else [])
    for k, g in enumerate(grids):
        r = harness.reconstruction_check(v["c"], v["n"], g)
        rows.append({"grid": "reference" if k == 0 else "refined", "h_ta": g.h_ta,
                     "h_b": g.h_b, "rel_l2": r.rel_l2, "warnings": "; ".join(r.warnings)})
        _log(rc, f"reconstruction ({rows[-1]['grid']}): rel L2 {r.rel_l2:.4e}")
        if k == 0:
            plots.reconstruction_panels(*r.mesh, r.exact, r.approx, _out(rc, "reconstruction"))
    harness.write_rows_csv(rows, _out(rc, "ridgelet_check.csv"))
    sl = harness.slice_check(v["n"])
    harness.write_rows_csv(sl, _out(rc, "fourier_slice.csv"))
    _log(rc, f"Fourier slice: max rel error {max(r['rel_error'] for r in sl):.3e}")
    pa = harness.parseval_check(tuple(v["parseval_orders"]))
    harness.write_rows_csv(pa, _out(rc, "parseval.csv"))
    _log(rc, f"Parseval: {sum(r['holds'] for r in pa)}/{len(pa)} within bound, "
             f"{sum(r['tail_warning'] for r in pa)} tail warnings")
    return EXIT_OK


def cmd_estimator_check(rc: RunConfig) -> int:
    from . import harness, plots
    v = rc.values["estimator"]
    if len(v["widths"]) != 2:
        raise ConfigError("estimator.widths needs exactly two widths")
    e = harness.estimator_check(v["seeds"], tuple(v["widths"]), rc.seed, v["c"], v["n"])
    rows = [{"point": k, "t": p[0], "x": p[1], "reference": ref, "mean": m, "stderr": se,
             "z": z, f"var_{e.widths[0]}": a, f"var_{e.widths[1]}": b, "var_ratio": r}
            for k, (p, ref, m, se, z, a, b, r) in enumerate(zip(
                e.points, e.reference, e.mean, e.stderr, e.z, e.var_small, e.var_large,
                e.ratio))]
    harness.write_rows_csv(rows, _out(rc, "estimator_check.csv"))
    plots.estimator_panels(e.z, e.ratio, _out(rc, "estimator_check"))
    _log(rc, f"|z| <= 3 at {int((np.abs(e.z) <= 3).sum())}/10 points; variance ratio in "
             f"[3, 5.33] at {int(((e.ratio >= 3) & (e.ratio <= 5.33)).sum())}/10")
    return EXIT_OK


def cmd_theory_report(rc: RunConfig) -> int:
    from . import harness
    from .features import Activation
    from .ridgelet import make_psi_spec
    from .sampling import HeavyTailPi
    v = rc.values["theory"]
    act = Activation.parse(v["activation"])
    spec = make_psi_spec(v["n"], act, 0, 0, v["d"], normalized=False)
    rep = harness.theory_coefficient_report(spec, v["T"], v["R"], v["domain_measure"], 0, 0,
                                            HeavyTailPi(v["lambda_tau"], v["lambda_a"]), act)
    harness.write_rows_csv([{"quantity": k, "value": val} for k, val in rep.items()],
                           _out(rc, "theory.csv"))
    for k, val in rep.items():
        _log(rc, f"{k:>18} {val}")
    return EXIT_OK


HELP = {
    "pme-sweep": "width sweep on the Barenblatt profile",
    "cns-sweep": "width sweep on the viscous shock profile",
    "cns-wave": "integrate and plot the travelling-wave profile",
    "ridgelet-check": "reconstruction, Fourier-slice and Parseval checks",
    "estimator-check": "Monte Carlo check of the unbiased ridgelet estimator",
    "theory-report": "constants entering the approximation bound",
}

COMMANDS = {
    "pme-sweep": cmd_pme_sweep,
    "cns-sweep": cmd_cns_sweep,
    "cns-wave": cmd_cns_wave,
    "ridgelet-check": cmd_ridgelet_check,
    "estimator-check": cmd_estimator_check,
    "theory-report": cmd_theory_report,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rannlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=HELP[name])
        sp.add_argument("--config", default="default", help="config file or 'default'")
        sp.add_argument("--seed", type=_u64, help="master seed (overrides run.seed)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--threads", type=_pos_int, help="worker threads")
        sp.add_argument("--override", action="append", metavar="SECTION.KEY=VALUE")
        sp.add_argument("-q", "--quiet", dest="verbose", action="store_const", const=0,
                        default=1)
    dc = sub.add_parser("default-config", help="print the default config of a subcommand")
    dc.add_argument("target", choices=list(COMMANDS))
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    from .cns import IntegrationError
    from .regress import DegenerateReferenceError
    from .ridgelet import AdmissibilityError
    from .sampling import ParameterError

    args = build_parser().parse_args(argv)
    if args.command == "default-config":
        sys.stdout.write(default_config_text(args.target))
        return EXIT_OK
    try:
        rc = load_run_config(args)
        print(f"# effective config for {rc.command}, output in {rc.out}")
        sys.stdout.write(rc.text())
        sys.stdout.flush()
        os.makedirs(rc.out, exist_ok=True)
        with open(_out(rc, "config.ini"), "w") as fh:
            fh.write(rc.text())
        return COMMANDS[rc.command](rc)
    except (np.linalg.LinAlgError, IntegrationError, AdmissibilityError, FloatingPointError,
            DegenerateReferenceError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ParameterError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
