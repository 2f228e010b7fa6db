"""Command-line front end: one subcommand per experiment family.

Every run writes CSV files plus ``manifest.txt`` into ``<out>/<subcommand>``.
Exit status is 0 on success, 2 on usage or configuration errors (nothing is
written), 1 on IO or runtime failures.
"""

import argparse
import configparser
import csv
import os
import sys
from pathlib import Path

import numpy as np

from .errors import ArtifactError, ConfigError
from .rng import SEED_BASE

OUTPUT_ENV = "ARTIFACT_OUTPUT_DIR"
DEFAULT_OUTPUT = "results"

SUBCOMMANDS = ("lock", "fork", "treasure", "vending", "hiv", "stateless", "diag")

# Run-level keys an overrides file may set; anything else goes to the environment.
RUN_KEYS = {"trials", "seed_base", "horizons", "policies", "workers"}

PAIRS = {
    "lock": [("asop", "sop"), ("fisher_sep_r", "sop")],
    "fork": [("thompson", "asop"), ("asop", "sop")],
    "treasure": [("sep", "sop"), ("sep", "asop")],
    "vending": [("asop", "sop"), ("fisher_sep_r", "asop"), ("sep", "asop")],
    "hiv": [("fisher_sep_t_nav", "asop"), ("thompson", "asop"), ("fisher_sep_t_nav", "thompson")],
}


class UsageError(Exception):
    pass


def _int_list(text):
    try:
        out = [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _float_list(text):
    try:
        out = [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _name_list(text):
    return [x.strip() for x in str(text).split(",") if x.strip()]


def parse_grid(text):
    """``start:stop:step`` inclusive of ``stop`` (to within half a step)."""
    try:
        start, stop, step = (float(x) for x in str(text).split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected start:stop:step, got {text!r}") from exc
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError("grid needs step > 0 and stop >= start")
    n = int(np.floor((stop - start) / step + 0.5)) + 1
    return [round(start + i * step, 12) for i in range(n)]


def _number(text):
    try:
        v = float(text)
    except ValueError as exc:
        raise ConfigError(f"override value {text!r} is not numeric") from exc
    return int(v) if v.is_integer() and "." not in str(text) and "e" not in str(text).lower() else v


def read_overrides(path):
    """Key-value document (``key = value`` lines, ``#`` comments) as a dict.

    Run keys accept comma lists (``horizons``, ``policies``); every other value
    must be numeric.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    text = Path(path).read_text()
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse overrides file {path}: {exc}") from exc
    out = {}
    for key, value in parser["run"].items():
        if key == "policies":
            out[key] = _name_list(value)
        elif key == "horizons":
            out[key] = [int(x) for x in value.split(",") if x.strip()]
        else:
            out[key] = _number(value)
    return out


def _parse_set(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = _number(v.strip())
    return out


def build_parser():
    p = argparse.ArgumentParser(prog="artifact", description="Simulator-anchored experimentation runs.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, trials, grid=True):
        sp.add_argument("--trials", type=int, default=None, help=f"number of trials (default {trials})")
        sp.add_argument("--seed-base", type=int, default=None, help=f"seed of trial 0 (default {SEED_BASE})")
        sp.add_argument("--out", default=None, help=f"output root (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
        sp.add_argument("--overrides", default=None, help="key = value file; flags win")
        if grid:
            sp.add_argument("--policies", type=_name_list, default=None, help="comma-separated policy names")
            sp.add_argument("--horizons", type=_int_list, default=None, help="comma-separated horizons")
            sp.add_argument("--workers", type=int, default=None, help="worker processes (results do not depend on it)")
            sp.add_argument("--set", action="append", default=None, metavar="KEY=VALUE", help="environment parameter")

    sp = sub.add_parser("lock", help="combination lock policy table")
    common(sp, 300)
    sp.add_argument("--c", type=_float_list, default=None, help="error budget(s), comma-separated")
    sp.add_argument("--t-eff", type=_int_list, default=None, help="chain lengths (alias of --horizons)")
    sp.add_argument("--n-units", type=int, default=None)

    sp = sub.add_parser("fork", help="stochastic fork")
    common(sp, 30)
    sp.add_argument("--k", type=int, default=None, help="fork length")

    sp = sub.add_parser("treasure", help="hidden treasure grid")
    common(sp, 50)

    sp = sub.add_parser("vending", help="vending operations")
    common(sp, 30)

    sp = sub.add_parser("hiv", help="HIV testing teams")
    common(sp, 30)
    sp.add_argument("--sim-b", type=float, default=None, help="simulator's Region-B prevalence (magnitude sweep knob)")

    sp = sub.add_parser("stateless", help="stateless warmup threshold sweep")
    common(sp, 1, grid=False)
    sp.add_argument("--gamma", type=_float_list, default=[0.5, 0.8, 0.9, 1.0])
    sp.add_argument("--kappa-grid", type=parse_grid, default=parse_grid("0:2:0.05"))
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--sigma0", type=float, default=1.0)
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--replications", type=int, default=10_000)

    sp = sub.add_parser("diag", help="simulator diagnostics on the treasure grid")
    common(sp, 1, grid=False)
    sp.add_argument("--pilot-steps", type=int, default=10)
    sp.add_argument("--units", type=int, default=100)
    sp.add_argument("--delta", type=float, default=0.05)
    return p


DEFAULT_TRIALS = {"lock": 300, "fork": 30, "treasure": 50, "vending": 30, "hiv": 30, "stateless": 1, "diag": 1}


def _resolve(args):
    """Merge overrides file and flags (flags win) into run settings and env params."""
    doc = read_overrides(args.overrides) if args.overrides else {}
    run = {k: doc.pop(k) for k in list(doc) if k in RUN_KEYS}
    params = dict(doc)
    params.update(_parse_set(getattr(args, "set", None)))
    flag = {
        "trials": args.trials,
        "seed_base": args.seed_base,
        "horizons": getattr(args, "horizons", None),
        "policies": getattr(args, "policies", None),
        "workers": getattr(args, "workers", None),
    }
    for k, v in flag.items():
        if v is not None:
            run[k] = v
    run.setdefault("trials", DEFAULT_TRIALS[args.command])
    run.setdefault("seed_base", SEED_BASE)
    run.setdefault("workers", 1)
    if int(run["trials"]) < 1:
        raise UsageError("--trials must be at least 1")
    if int(run["workers"]) < 1:
        raise UsageError("--workers must be at least 1")
    return run, params


def _out_dir(args):
    root = args.out or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT
    return Path(root) / args.command


def _table(summary, title):
    """Policies as rows, horizons as columns, mean % of oracle."""
    horizons = sorted({r.horizon for r in summary})
    policies = []
    for r in summary:
        if r.policy not in policies:
            policies.append(r.policy)
    cell = {(r.policy, r.horizon): r for r in summary}
    width = max(len(p) for p in policies) + 2
    lines = [title, "policy".ljust(width) + "".join(f"T={h}".rjust(14) for h in horizons)]
    for p in policies:
        row = p.ljust(width)
        for h in horizons:
            r = cell.get((p, h))
            row += (f"{r.mean_pct:6.1f} +-{r.ci95_half:5.1f}" if r else "-").rjust(14)
        lines.append(row)
    return "\n".join(lines) + "\n"


def _grid_configs(args, run, params):
    from .harness import GridConfig, environment

    env = args.command
    spec = environment(env)
    policies = tuple(run.get("policies") or spec.policies)
    horizons = tuple(run.get("horizons") or spec.horizons)
    common = dict(trials=int(run["trials"]), seed_base=int(run["seed_base"]), workers=int(run["workers"]))
    if env == "lock":
        if args.t_eff:
            horizons = tuple(args.t_eff)
        if args.n_units is not None:
            params["n_units"] = args.n_units
        cs = args.c or ([params.pop("c")] if "c" in params else [1.0])
        params.pop("c", None)
        return [(f"c={c:g}", GridConfig(env, policies, horizons, params={**params, "c": float(c)}, **common)) for c in cs]
    if env == "fork" and args.k is not None:
        params["k"] = args.k
    if env == "hiv" and args.sim_b is not None:
        params["sim_b"] = args.sim_b
    return [("", GridConfig(env, policies, horizons, params=params, **common))]


def run_grid(args, run, params):
    from .harness import _validate, run_common_seed_grid, write_grid_outputs

    configs = _grid_configs(args, run, params)
    for _, cfg in configs:
        _validate(cfg)
    base = _out_dir(args)
    text = ""
    for label, cfg in configs:
        out = base / label if label else base
        records = run_common_seed_grid(cfg)
        summary = write_grid_outputs(out, cfg, records, PAIRS.get(args.command, ()))
        if args.command == "treasure":
            write_heatmaps(out / "heatmap.csv", records)
        title = f"{args.command} {label}".strip() + f" (% of oracle, {cfg.trials} trials, mean +- 95% CI)"
        block = _table(summary, title)
        (out / "table.txt").write_text(block)
        text += block
    return text


def write_heatmaps(path, records):
    """Mean visit count per grid cell and policy at the longest horizon."""
    longest = max(r.horizon for r in records)
    maps = {}
    for r in records:
        if r.horizon == longest and "heatmap" in r.extras:
            maps.setdefault(r.policy, []).append(np.asarray(r.extras["heatmap"], dtype=float))
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("policy", "row", "col", "mean_visits"))
        for policy, arrs in maps.items():
            m = np.mean(arrs, axis=0)
            for (i, j), v in np.ndenumerate(m):
                w.writerow([policy, i, j, f"{v:.10g}"])


def run_stateless(args, run):
    from .harness import write_manifest
    from .rng import substream
    from .stateless import kappa_star, net_value_zero_crossing, sweep

    gammas = list(args.gamma)
    if any(not 0 < g <= 1 for g in gammas):
        raise UsageError("--gamma values must lie in (0, 1]")
    if args.n < 1 or args.sigma0 <= 0 or args.sigma <= 0 or args.replications < 0:
        raise UsageError("need n >= 1, sigma0 > 0, sigma > 0, replications >= 0")
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    rng = substream(int(run["seed_base"]), "stateless", "mc")
    rows = sweep(gammas, args.kappa_grid, args.n, args.sigma0, args.sigma, args.replications, rng)
    with open(out / "sweep.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("kappa", "gamma", "delta_v_star", "n_e_star", "mc_mean", "mc_se"))
        for k, g, v, n_e, m, se in rows:
            w.writerow([f"{k:.10g}", f"{g:.10g}", f"{v:.10g}", n_e, f"{m:.10g}", f"{se:.10g}"])
    lines = ["gamma   kappa_star   net_value_zero_crossing"]
    with open(out / "thresholds.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("gamma", "kappa_star", "net_value_zero_crossing"))
        for g in gammas:
            ks = kappa_star(g)
            z = net_value_zero_crossing(g, args.n, args.sigma0, args.sigma)
            w.writerow([f"{g:.10g}", f"{ks:.10g}", f"{z:.10g}"])
            lines.append(f"{g:5.2f}   {ks:10.4f}   {z:10.4f}")
    cfg = {"command": "stateless", "gamma": gammas, "kappa_grid": list(args.kappa_grid), "n": int(args.n),
           "sigma0": args.sigma0, "sigma": args.sigma, "replications": args.replications,
           "seed_base": int(run["seed_base"])}
    write_manifest(out / "manifest.txt", cfg, [out / "sweep.csv", out / "thresholds.csv"])
    text = "\n".join(lines) + "\n"
    (out / "table.txt").write_text(text)
    return text


def run_diag_cmd(args, run):
    from .experiments.diag import BOUND_HEADER, run_diag
    from .harness import write_manifest
    from .rng import trial_seed

    if args.pilot_steps < 1 or args.units < 1 or not 0 < args.delta < 1:
        raise UsageError("need pilot-steps >= 1, units >= 1, 0 < delta < 1")
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    text = ""
    bounds_path = out / "bounds.csv"
    with open(bounds_path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("trial", "seed") + BOUND_HEADER)
        for i in range(int(run["trials"])):
            seed = trial_seed(i, int(run["seed_base"]))
            report, rows = run_diag(seed, args.pilot_steps, args.units, args.delta)
            (out / f"residuals_{i}.csv").write_text(report.to_csv())
            for q, v in rows:
                w.writerow([i, seed, q, f"{v:.10g}"])
                if i == 0:
                    text += f"{q:22s} {v:.4f}\n"
    files = [bounds_path] + sorted(out.glob("residuals_*.csv"))
    cfg = {"command": "diag", "trials": int(run["trials"]), "seed_base": int(run["seed_base"]),
           "pilot_steps": args.pilot_steps, "units": args.units, "delta": args.delta}
    write_manifest(out / "manifest.txt", cfg, files)
    (out / "table.txt").write_text(text)
    return text


def dispatch(args):
    run, params = _resolve(args)
    if args.command == "stateless":
        return run_stateless(args, run)
    if args.command == "diag":
        return run_diag_cmd(args, run)
    return run_grid(args, run, params)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        text = dispatch(args)
    except (UsageError, ConfigError) as exc:
        parser.error(str(exc))
    except OSError as exc:
        print(f"artifact: IO error: {exc}", file=sys.stderr)
        return 1
    except ArtifactError as exc:
        print(f"artifact: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
