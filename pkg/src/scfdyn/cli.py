"""Command-line front end.

Every subcommand writes JSON (or CSV for tabular results) to ``--output``;
without it, the file goes to $SCFDYN_OUTPUT_DIR/<subcommand>.<ext> when that
variable is set, and to standard output otherwise.  ``--config FILE`` reads a
JSON object whose keys are the long flag names (dashes or underscores);
flags given on the command line take precedence.

Exit codes: 0 success, 1 invalid input, 2 numerical non-convergence,
3 input in the escape set (or an orbit that terminates at a cusp).
"""
import argparse
import csv
import io
import json
import os
import re
import sys
from fractions import Fraction

import numpy as np

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGENCE, EXIT_ESCAPE = 0, 1, 2, 3
OUTPUT_ENV = "SCFDYN_OUTPUT_DIR"


class UsageError(ValueError):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# value parsing

_SURD = re.compile(r"^\s*([+-]?[\d./]+)?\s*(?:([+-])\s*([\d./]*)\s*\*?\s*sqrt\(?(\d+)\)?)?\s*$")


def parse_scalar(text, exact=False):
    """Float by default.  'p/q' gives a Fraction, 'a+b*sqrt(d)' (also
    'sqrt3-1', '2-sqrt(3)') a QuadSurd; exact=True reads decimals exactly."""
    from .scalar import QuadSurd
    t = str(text).strip().replace(" ", "")
    if "sqrt" in t:
        if t.startswith("sqrt") or t.startswith("+sqrt") or t.startswith("-sqrt"):
            # move a leading radical to the end: sqrt3-1 -> -1+sqrt3
            m = re.match(r"^([+-]?)([\d./]*)\*?sqrt\(?(\d+)\)?(.*)$", t)
            if not m:
                raise ValueError(f"cannot parse {text!r}")
            sign, coef, d, rest = m.groups()
            t = (rest or "0") + (sign or "+") + coef + "sqrt" + d
        m = _SURD.match(t)
        if not m or m.group(4) is None:
            raise ValueError(f"cannot parse {text!r}")
        a = Fraction(m.group(1) or 0)
        b = Fraction(m.group(3) or 1) * (-1 if m.group(2) == "-" else 1)
        return QuadSurd(a, 0, 0) + b * QuadSurd.sqrt(int(m.group(4)))
    if "/" in t or exact:
        try:
            return Fraction(t)
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"cannot parse {text!r}") from exc
    return float(t)


def parse_list(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    out = [float(v) for v in str(text).split(",") if v.strip()]
    if not out:
        raise ValueError("empty list")
    return out


def _jsonable(v):
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, Fraction):
        return str(v)
    return str(v)


# ---------------------------------------------------------------------------
# output

def _destination(args, ext):
    if args.output:
        return args.output
    base = os.environ.get(OUTPUT_ENV)
    if base:
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, f"{args.command}.{ext}")
    return None


def _emit_text(args, text, ext):
    path = _destination(args, ext)
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)
    return path


def _emit_json(args, obj):
    return _emit_text(args, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n", "json")


# ---------------------------------------------------------------------------
# commands

def cmd_expand(args):
    from .scf import expand
    x = parse_scalar(args.x, args.exact)
    e = expand(x, args.depth)
    _emit_json(args, {"x": str(x), "depth": args.depth,
                      "digits": [str(d) for d in e.digits], "terminated": e.terminated})


def cmd_dual_expand(args):
    from .scf import dual_expand
    y = parse_scalar(args.y, args.exact)
    e = dual_expand(y, args.depth)
    digits = e.digits if hasattr(e, "digits") else e
    _emit_json(args, {"y": str(y), "depth": args.depth, "digits": [str(d) for d in digits],
                      "terminated": bool(getattr(e, "terminated", False))})


def cmd_convergents(args):
    from .convergents import convergent_states, hat_identity_check, sign_product
    from .scf import expand, parse_digits
    if (args.digits is None) == (args.x is None):
        raise UsageError("give exactly one of --digits and --x")
    if args.digits is not None:
        digits = parse_digits(args.digits)
        if not digits:
            raise UsageError(f"no digits found in {args.digits!r}")
    else:
        digits = expand(parse_scalar(args.x, args.exact), args.depth).digits
    states = convergent_states(digits)
    rows = []
    for n, st in enumerate(states):
        row = {"n": n, "P": st.P, "Q": st.Q, "U": st.U, "V": st.V,
               "Phat": st.Phat, "Qhat": st.Qhat, "det": st.M.det()}
        if n:
            row["digit"] = str(digits[n - 1])
            row["hat_identity"] = hat_identity_check(st, digits[n - 1])
            row["det_matches_sign_product"] = st.M.det() == sign_product(digits[:n])
        rows.append(row)
    _emit_json(args, {"digits": [str(d) for d in digits], "states": rows})


def cmd_nat_ext(args):
    from .natext import NatExtPoint, double_cover_step
    from .scf import TerminatedError
    p = NatExtPoint(parse_scalar(args.x, args.exact), parse_scalar(args.y, args.exact), args.j)
    pts = [p]
    terminated = False
    for _ in range(args.steps):
        try:
            p = double_cover_step(p)
        except TerminatedError:
            terminated = True
            break
        pts.append(p)
    _emit_json(args, {"orbit": [{"x": float(q.x), "y": float(q.y), "j": q.j, "x_exact": str(q.x),
                                 "y_exact": str(q.y)} for q in pts],
                      "terminated": terminated})


def cmd_spectrum(args):
    from .transfer import leading_eigenpair
    rep = leading_eigenpair(args.grid, args.cutoff, tol=args.tol, rule=args.rule,
                            max_iter=args.max_iter, tail=args.tail)
    out = rep.to_dict()
    out.update({"cutoff": args.cutoff, "tail": args.tail})
    _emit_json(args, out)


def cmd_mu_check(args):
    from .natext import box_measure_mu_bar, preimage_measure_mu_bar
    from .transfer import superlevel_measure, superlevel_measure_quadrature
    from .natext import Y_MAX, Y_MIN
    rng = np.random.default_rng(args.seed)
    boxes = []
    for _ in range(args.boxes):
        x0, x1 = np.sort(rng.random(2))
        y0, y1 = np.sort(Y_MIN + (Y_MAX - Y_MIN) * rng.random(2))
        pre, bound = preimage_measure_mu_bar(x0, x1, y0, y1, args.cutoff)
        direct = float(box_measure_mu_bar(x0, x1, y0, y1))
        boxes.append({"box": [float(x0), float(x1), float(y0), float(y1)], "mu_bar": direct,
                      "preimage": pre, "difference": pre - direct, "tail_bound": bound})
    superlevel = [{"N": n, "closed_form": superlevel_measure(n),
                   "quadrature": superlevel_measure_quadrature(n)} for n in range(1, args.n_max + 1)]
    worst = max((abs(b["difference"]) for b in boxes), default=0.0)
    _emit_json(args, {"boxes": boxes, "max_abs_difference": worst, "superlevel": superlevel})


def cmd_cstar(args):
    from .evt import cstar_experiment, cstar_quadrature
    seeds = [args.seed + k for k in range(args.runs)]
    out = cstar_experiment(seeds, args.iters, args.reference, args.tolerance)
    if args.quadrature:
        out["quadrature"] = cstar_quadrature()
    _emit_json(args, out)


def _evt_config(args, depth, tolerance, measure):
    from .evt import ExperimentConfig
    return ExperimentConfig(samples=args.samples, depth=depth, y_grid=tuple(parse_list(args.y)),
                            sampling_measure=measure, seed=args.seed, precision=args.precision,
                            cstar=getattr(args, "cstar", None) or ExperimentConfig.cstar,
                            tolerance=tolerance)


def _write_evt(args, cdf, cfg):
    path = _emit_text(args, cdf.to_csv(), "csv")
    summary = cdf.summary(cfg, cfg.tolerance)
    target = args.summary or (os.path.splitext(path)[0] + ".json" if path else None)
    if target:
        with open(target, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")
    else:
        sys.stderr.write(json.dumps(summary, default=_jsonable) + "\n")


def cmd_evt_digits(args):
    from .evt import digit_evt
    cfg = _evt_config(args, args.n, args.tolerance, args.measure)
    _write_evt(args, digit_evt(cfg, args.min_samples, args.min_depth), cfg)


def cmd_evt_geodesic(args):
    from .evt import geodesic_evt
    cfg = _evt_config(args, args.t, args.tolerance, args.measure)
    _write_evt(args, geodesic_evt(cfg, args.min_samples, args.min_depth), cfg)


def _start_geodesic(args):
    from .geodesic import J_inverse, normalize_lift
    from .natext import NatExtPoint
    if args.forward is not None or args.backward is not None:
        if args.forward is None or args.backward is None:
            raise UsageError("--forward and --backward go together")
        g, _ = normalize_lift(parse_scalar(args.forward, args.exact),
                              parse_scalar(args.backward, args.exact))
        return g
    if args.x is None or args.y is None:
        raise UsageError("give --x and --y, or --forward and --backward")
    return J_inverse(NatExtPoint(parse_scalar(args.x, args.exact), parse_scalar(args.y, args.exact), args.j))


def cmd_excursions(args):
    from .geodesic import excursions
    recs = excursions(_start_geodesic(args), args.count, args.t_max)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "digit", "r_n", "T_n", "h_n"])
    for r in recs:
        w.writerow([repr(v) if isinstance(v, float) else str(v) for v in r.row()])
    _emit_text(args, buf.getvalue(), "csv")


def cmd_crossings(args):
    from .geodesic import crossing_count, rho, star_pair
    g = _start_geodesic(args)
    rows = []
    for n in range(1, args.count + 1):
        d, _, _ = star_pair(g)
        c = crossing_count(g)
        rows.append({"n": n, "digit": str(d), "crossings": c, "a": d.a, "match": c == d.a})
        g = rho(g)
    _emit_json(args, {"excursions": rows, "mismatches": sum(not r["match"] for r in rows)})


# ---------------------------------------------------------------------------
# parser

def _common(p):
    p.add_argument("--config", help="JSON file with flag values (keys = long flag names)")
    p.add_argument("--output", help="output file (default: $%s/<command>.<ext> or stdout)" % OUTPUT_ENV)


def _point_flags(p, with_lift=False):
    p.add_argument("--x", help="x in [0,1]: decimal, p/q or a+b*sqrt(d)")
    p.add_argument("--y", help="y in [sqrt3-2, sqrt3]")
    p.add_argument("--j", type=int, default=1, choices=(1, -1), help="orientation sign")
    p.add_argument("--exact", action="store_true", help="read decimals as exact rationals")
    if with_lift:
        p.add_argument("--forward", help="forward endpoint of a geodesic (normalised first)")
        p.add_argument("--backward", help="backward endpoint of a geodesic")


def build_parser():
    parser = Parser(prog="scfdyn", description=__doc__.split("\n\n")[0],
                    formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=Parser)
    sub.required = True

    p = sub.add_parser("expand", help="SCF digits of x")
    _common(p)
    p.add_argument("--x", help="point of (0,1)")
    p.add_argument("--depth", type=int, default=20)
    p.add_argument("--exact", action="store_true", help="read decimals as exact rationals")
    p.set_defaults(func=cmd_expand, required=("x",))

    p = sub.add_parser("dual-expand", help="dual SCF digits of y")
    _common(p)
    p.add_argument("--y", help="point of [sqrt3-2, sqrt3]")
    p.add_argument("--depth", type=int, default=20)
    p.add_argument("--exact", action="store_true", help="read decimals as exact rationals")
    p.set_defaults(func=cmd_dual_expand, required=("y",))

    p = sub.add_parser("convergents", help="convergent matrices of a digit string")
    _common(p)
    p.add_argument("--digits", help="digit string such as '(2,-1)_e (3,1)_o'")
    p.add_argument("--x", help="expand this point instead of giving digits")
    p.add_argument("--depth", type=int, default=10)
    p.add_argument("--exact", action="store_true", help="read decimals as exact rationals")
    p.set_defaults(func=cmd_convergents, required=())

    p = sub.add_parser("nat-ext", help="orbit of a point under the double cover map")
    _common(p)
    _point_flags(p)
    p.add_argument("--steps", type=int, default=10)
    p.set_defaults(func=cmd_nat_ext, required=("x", "y"))

    p = sub.add_parser("spectrum", help="leading eigenpair of the transfer operator")
    _common(p)
    p.add_argument("--grid", type=int, default=2048)
    p.add_argument("--cutoff", type=int, default=10 ** 4, help="largest explicit partial quotient")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--rule", choices=("uniform", "chebyshev"), default="uniform")
    p.add_argument("--tail", choices=("closure", "truncate"), default="closure")
    p.add_argument("--max-iter", type=int, default=2000)
    p.set_defaults(func=cmd_spectrum, required=())

    p = sub.add_parser("mu-check", help="invariance of mu-bar on random boxes and mu(S_N)")
    _common(p)
    p.add_argument("--boxes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cutoff", type=int, default=2000)
    p.add_argument("--n-max", type=int, default=100)
    p.set_defaults(func=cmd_mu_check, required=())

    p = sub.add_parser("cstar", help="estimators of the mean excursion time C*")
    _common(p)
    p.add_argument("--iters", type=int, default=10 ** 6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=int, default=1, help="seeds seed, seed+1, ...")
    p.add_argument("--reference", type=float, default=3.72805)
    p.add_argument("--tolerance", type=float, default=5e-3)
    p.add_argument("--quadrature", action="store_true", help="also integrate log f against mu")
    p.set_defaults(func=cmd_cstar, required=())

    for name, depth_flag, func, tol, measure in (
            ("evt-digits", "--n", cmd_evt_digits, 0.02, "uniform"),
            ("evt-geodesic", "--t", cmd_evt_geodesic, 0.05, "mu_tilde")):
        p = sub.add_parser(name, help="extreme value experiment (CSV + JSON summary)")
        _common(p)
        p.add_argument(depth_flag, type=float, default=10 ** 4,
                       help="digit depth N" if depth_flag == "--n" else "flow time horizon T")
        p.add_argument("--samples", type=int, default=10 ** 5)
        p.add_argument("--y", default="0.5,1,2,4", help="comma separated thresholds")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--measure", choices=("uniform", "mu", "mu_tilde"), default=measure)
        p.add_argument("--precision", type=int, default=53, help="bits; above 53 uses mpmath")
        p.add_argument("--tolerance", type=float, default=tol)
        p.add_argument("--summary", help="JSON summary path (default: next to the CSV)")
        p.add_argument("--min-samples", type=int, default=1000)
        p.add_argument("--min-depth", type=float, default=1000)
        if name == "evt-geodesic":
            p.add_argument("--cstar", type=float, default=3.72805, help="constant in C = C0/C*")
        p.set_defaults(func=func, required=())

    for name, func, helptext in (("excursions", cmd_excursions, "excursion trace (CSV)"),
                                 ("crossings", cmd_crossings, "crossing counts against digits")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        _point_flags(p, with_lift=True)
        p.add_argument("--count", type=int, default=10)
        if name == "excursions":
            p.add_argument("--t-max", type=float, default=None)
        p.set_defaults(func=func, required=())
    return parser


def _subparser(parser, name):
    for act in parser._subparsers._group_actions:
        if name in act.choices:
            return act.choices[name]
    raise UsageError(f"unknown command {name!r}")


def _apply_config(parser, argv, args):
    """Reparse with config values as defaults so explicit flags still win."""
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    sp = _subparser(parser, args.command)
    flags = {a.dest: a for a in sp._actions if a.option_strings and a.dest not in ("help", "config")}
    defaults = {}
    for key, val in cfg.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest not in flags:
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        act = flags[dest]
        if isinstance(val, list):
            val = ",".join(str(v) for v in val)
        if act.type is not None and val is not None and not isinstance(val, bool):
            try:
                val = act.type(val)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from exc
        if act.choices is not None and val not in act.choices:
            raise UsageError(f"config key {key!r}: {val!r} not in {list(act.choices)}")
        defaults[dest] = val
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def _validate(args):
    for name in args.required:
        if getattr(args, name) is None:
            raise UsageError(f"{args.command}: --{name.replace('_', '-')} is required")
    for name in ("depth", "steps", "grid", "cutoff", "iters", "runs", "samples", "boxes", "count",
                 "n_max", "max_iter"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            raise UsageError(f"--{name.replace('_', '-')} must be positive")
    for name in ("n", "t", "tol", "t_max"):
        v = getattr(args, name, None)
        if v is not None and not v > 0:
            raise UsageError(f"--{name.replace('_', '-')} must be positive")
    if getattr(args, "y", None) is not None and args.command.startswith("evt"):
        parse_list(args.y)


def run(argv=None):
    from .geodesic import EscapeError
    from .scf import DomainError, TerminatedError
    from .transfer import NonConvergenceError
    from .evt import SamplingError
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            args = _apply_config(parser, argv, args)
        _validate(args)
        args.func(args)
    except (EscapeError, TerminatedError) as exc:
        print(f"scfdyn: escape: {exc}", file=sys.stderr)
        return EXIT_ESCAPE
    except (NonConvergenceError, SamplingError, ArithmeticError) as exc:
        print(f"scfdyn: no convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (UsageError, DomainError, ValueError, TypeError) as exc:
        print(f"scfdyn: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"scfdyn: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
