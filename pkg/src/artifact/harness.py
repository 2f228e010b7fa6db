"""Common-seed trial grids, oracle normalization and result files.

Every (trial, policy) job builds its own world, controller and generators from
the trial seed, so jobs are independent and may run in any order or process.
Results are folded in a fixed (policy, horizon, trial) order, which makes the
emitted files independent of the worker count.
"""

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InsufficientInformationError
from .rng import SEED_BASE, SEED_STRIDE, trial_seed
from .stats import PAIRED_HEADER, paired_stats, t_interval, two_se

ORACLE = "oracle"


@dataclass(frozen=True)
class EnvSpec:
    name: str
    policies: tuple
    horizons: tuple
    params: dict
    runner: str

    def check(self, policies, horizons, params):
        unknown = [p for p in policies if p not in self.policies]
        if unknown:
            raise ConfigError(f"unknown {self.name} policy {unknown[0]!r}; choose from {', '.join(self.policies)}")
        bad = [k for k in params if k not in self.params]
        if bad and self.name != "hiv":
            raise ConfigError(f"unknown {self.name} parameter {bad[0]!r}")
        if not horizons:
            raise ConfigError("at least one horizon is required")
        if any(int(h) < 1 for h in horizons):
            raise ConfigError("horizons must be positive")


def _registry():
    from .experiments import fork, hiv, lock, treasure, vending

    return {
        "lock": EnvSpec("lock", lock.CHAIN_POLICIES, lock.T_EFFS, {"c": 1.0, "n_units": lock.N_UNITS}, "lock"),
        "fork": EnvSpec("fork", fork.FORK_POLICIES, fork.HORIZONS, {"k": fork.K_DEFAULT, "kappa0": fork.KAPPA0}, "fork"),
        "treasure": EnvSpec("treasure", treasure.TREASURE_POLICIES, (treasure.HORIZON,), {"n_units": treasure.N_UNITS}, "treasure"),
        "vending": EnvSpec("vending", vending.VENDING_POLICIES, vending.HORIZONS, {}, "vending"),
        "hiv": EnvSpec("hiv", hiv.HIV_POLICIES, hiv.HORIZONS, {}, "hiv"),
    }


def environment(name):
    reg = _registry()
    if name not in reg:
        raise ConfigError(f"unknown environment {name!r}; choose from {', '.join(reg)}")
    return reg[name]


@dataclass(frozen=True)
class GridConfig:
    env: str
    policies: tuple
    horizons: tuple
    trials: int
    seed_base: int = SEED_BASE
    params: dict = field(default_factory=dict)
    workers: int = 1

    def canonical(self):
        """Everything that determines the results; the worker count is excluded."""
        return {
            "env": self.env,
            "policies": list(self.policies),
            "horizons": [int(h) for h in self.horizons],
            "trials": int(self.trials),
            "seed_base": int(self.seed_base),
            "params": {k: self.params[k] for k in sorted(self.params)},
        }

    def config_hash(self):
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TrialRecord:
    env: str
    policy: str
    horizon: int
    trial: int
    seed: int
    raw_value: float
    oracle_value: float
    events: tuple = ()
    extras: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def pct(self):
        return 100.0 * self.raw_value / self.oracle_value


def run_trial(env, trial, seed, policy, horizons, params, trials):
    """One (trial, policy) job: ``(values by horizon, extras, events)``."""
    if env == "lock":
        from .experiments.lock import run_lock_trial

        return run_lock_trial(trial, seed, policy, horizons, n_draws=trials, seed_base=seed - SEED_STRIDE * trial, **params)
    if env == "fork":
        from .experiments.fork import run_fork_trial

        return run_fork_trial(seed, policy, horizons, **params)
    if env == "treasure":
        from .experiments.treasure import run_treasure_trial

        values, heat, events = run_treasure_trial(seed, policy, horizons, **params)
        return values, {"heatmap": heat}, events
    if env == "vending":
        from .experiments.vending import run_vending_trial

        return run_vending_trial(seed, policy, horizons)
    if env == "hiv":
        from .envs.hiv import HivConfig
        from .experiments.hiv import run_hiv_trial

        return run_hiv_trial(seed, policy, horizons, HivConfig.from_overrides(params))
    raise ConfigError(f"unknown environment {env!r}")


def _job(args):
    return run_trial(*args)


def _validate(config):
    spec = environment(config.env)
    if int(config.trials) < 1:
        raise ConfigError("trials must be at least 1")
    if int(config.workers) < 1:
        raise ConfigError("workers must be at least 1")
    spec.check(config.policies, config.horizons, config.params)
    if config.env == "hiv":
        from .envs.hiv import HivConfig

        HivConfig.from_overrides(config.params)
    return spec


def run_common_seed_grid(config):
    """Run every policy (plus the oracle) on every trial seed.

    Names are validated before anything runs. Records come back sorted by
    (policy in config order with the oracle first, horizon, trial).
    """
    _validate(config)
    policies = [ORACLE] + [p for p in config.policies if p != ORACLE]
    horizons = tuple(sorted(set(int(h) for h in config.horizons)))
    params = dict(config.params)
    jobs = [
        (config.env, i, trial_seed(i, config.seed_base), p, horizons, params, int(config.trials))
        for p in policies
        for i in range(int(config.trials))
    ]
    if int(config.workers) > 1:
        with ProcessPoolExecutor(max_workers=int(config.workers)) as ex:
            results = list(ex.map(_job, jobs, chunksize=max(1, len(jobs) // (8 * int(config.workers)))))
    else:
        results = [_job(j) for j in jobs]
    by_key = {(j[3], j[1]): r for j, r in zip(jobs, results)}
    records = []
    for p in policies:
        for h in horizons:
            for i in range(int(config.trials)):
                values, extras, events = by_key[(p, i)]
                oracle_values = by_key[(ORACLE, i)][0]
                records.append(TrialRecord(
                    env=config.env, policy=p, horizon=h, trial=i, seed=trial_seed(i, config.seed_base),
                    raw_value=float(values[h]), oracle_value=float(oracle_values[h]),
                    events=tuple(e for e in events if e[0] < h), extras=extras,
                ))
    return records


@dataclass(frozen=True)
class SummaryRow:
    env: str
    policy: str
    horizon: int
    mean_pct: float
    ci95_half: float
    two_se: float
    n: int

    def row(self):
        return [self.env, self.policy, self.horizon, _fmt(self.mean_pct), _fmt(self.ci95_half), _fmt(self.two_se), self.n]


SUMMARY_HEADER = ("env", "policy", "horizon", "mean_pct_oracle", "ci95_half_width", "two_se", "n")
RECORD_HEADER = ("env", "policy", "horizon", "trial", "seed", "raw_value", "oracle_value", "pct_oracle", "n_events")


def _check_oracle(r):
    if r.oracle_value is None or not np.isfinite(r.oracle_value):
        raise InsufficientInformationError(
            f"no oracle value for env={r.env} horizon={r.horizon} trial={r.trial}")
    if r.oracle_value <= 0:
        raise InsufficientInformationError(
            f"oracle value {r.oracle_value} is not positive for env={r.env} horizon={r.horizon} trial={r.trial}")


def summarize_to_oracle_pct(records):
    """Per (env, policy, horizon): mean of per-trial ``100 * raw / oracle``, the
    ordinary-t 95% half-width, the 2-SE band and ``n``."""
    groups = {}
    for r in records:
        _check_oracle(r)
        groups.setdefault((r.env, r.policy, r.horizon), []).append(r.pct)
    rows = []
    for (env, policy, h), vals in groups.items():
        mean, half = t_interval(vals)
        rows.append(SummaryRow(env, policy, h, mean, 0.0 if not np.isfinite(half) else half, two_se(vals), len(vals)))
    return rows


def pct_by_trial(records, policy, horizon):
    """Per-trial oracle percentages of one policy at one horizon, ordered by trial."""
    rows = sorted((r for r in records if r.policy == policy and r.horizon == horizon), key=lambda r: r.trial)
    for r in rows:
        _check_oracle(r)
    return np.array([r.pct for r in rows]), [r.trial for r in rows]


def paired_table(records, pairs, min_pairs=5):
    """Paired reports ``a - b`` in pp of oracle at every horizon both policies share."""
    out = []
    horizons = sorted({r.horizon for r in records})
    for a, b in pairs:
        for h in horizons:
            xa, ta = pct_by_trial(records, a, h)
            xb, tb = pct_by_trial(records, b, h)
            if not ta or not tb:
                continue
            if ta != tb:
                raise InsufficientInformationError(f"trials of {a} and {b} at horizon {h} do not pair up")
            if len(ta) < min_pairs:
                continue
            out.append((h, paired_stats(xa, xb, f"{a}-{b}", min_pairs=min_pairs)))
    return out


def _fmt(x):
    return "nan" if x is None or not np.isfinite(x) else f"{float(x):.10g}"


def write_records_csv(path, records):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RECORD_HEADER)
        for r in records:
            w.writerow([r.env, r.policy, r.horizon, r.trial, r.seed, _fmt(r.raw_value), _fmt(r.oracle_value),
                        _fmt(r.pct if r.oracle_value > 0 else float("nan")), len(r.events)])


def write_events_csv(path, records):
    """Controller events of each (policy, trial), taken at the longest horizon."""
    longest = {}
    for r in records:
        key = (r.policy, r.trial)
        if key not in longest or r.horizon > longest[key].horizon:
            longest[key] = r
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("env", "policy", "trial", "time", "tag", "payload"))
        for r in longest.values():
            for t, tag, payload in r.events:
                w.writerow([r.env, r.policy, r.trial, t, tag, payload])


def write_summary_csv(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for row in rows:
            w.writerow(row.row())


def write_paired_csv(path, reports):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("horizon",) + PAIRED_HEADER)
        for h, rep in reports:
            w.writerow([h] + rep.row())


def write_manifest(path, config, files):
    """Plain-text manifest: config hash, seed base and the canonical config."""
    canon = config.canonical() if hasattr(config, "canonical") else dict(config)
    blob = json.dumps(canon, sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(blob.encode("utf-8")).hexdigest()
    lines = [
        f"config_hash: {digest}",
        f"seed_base: {canon.get('seed_base', SEED_BASE)}",
        f"config: {blob}",
        "files: " + " ".join(sorted(os.path.basename(str(p)) for p in files)),
    ]
    Path(path).write_text("\n".join(lines) + "\n")
    return digest


def write_grid_outputs(out_dir, config, records, pairs=()):
    """Records, events, summary and paired files plus the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "records.csv", out / "events.csv", out / "summary.csv", out / "paired.csv"]
    write_records_csv(files[0], records)
    write_events_csv(files[1], records)
    summary = summarize_to_oracle_pct(records)
    write_summary_csv(files[2], summary)
    write_paired_csv(files[3], paired_table(records, pairs) if config.trials >= 5 else [])
    write_manifest(out / "manifest.txt", config, files)
    return summary


__all__ = [
    "EnvSpec", "GridConfig", "SummaryRow", "TrialRecord", "environment", "paired_table",
    "pct_by_trial", "run_common_seed_grid", "run_trial", "summarize_to_oracle_pct", "write_grid_outputs",
    "write_manifest", "write_paired_csv", "write_records_csv", "write_summary_csv",
]
