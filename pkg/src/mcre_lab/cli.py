"""Config-driven experiment runner.

Subcommands: verify (assumption reports), couple (coupling campaign),
tv (total-variation decay), mix (alpha-mixing curve), var (SGLD
risk-measure run), fit (rate-template fitting of an emitted curve).

Every run writes CSV artifacts with pinned headers plus a manifest
recording the config hash and seed; identical (config, seed) reproduce
byte-identical outputs regardless of the worker count, because work is
sharded by fixed-size blocks keyed to substream indices, never by
scheduling.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import coupling as cpl
from . import estimate as est
from .core import (
    EnvironmentSpec,
    NumericOverflowError,
    RngStream,
    simulate_forward_batch,
)
from .models import (
    extract_var_cvar,
    load_loss_csv,
    make_sgld,
    model_zoo,
)
from .verify import check_contractivity, check_minorization, check_support

log = logging.getLogger("mcre")

SHARD_SIZE = 2000

HEADERS = {
    "couple": ["n", "replications", "failures", "failure_rate", "mean_bound", "bound_se"],
    "curve": ["index", "estimate", "std_error"],
    "verify": ["assumption", "trials", "violations", "worst_margin"],
    "var": ["step", "var_estimate", "cvar_estimate"],
    "meeting": ["n", "meeting_time"],
}


class ConfigError(Exception):
    """Schema violation; carries the offending field path."""

    def __init__(self, path, message):
        super().__init__(f"config field {path!r}: {message}")
        self.field_path = path


def _lookup(config: dict, path: str, default=None, required=False, kind=None):
    node = config
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if required:
                raise ConfigError(path, "missing")
            return default
        node = node[part]
    if kind is not None and not isinstance(node, kind):
        raise ConfigError(path, f"expected {kind}, got {type(node).__name__}")
    return node


def _load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"parse error: {exc}")


def _zoo_entry(config: dict):
    kind = _lookup(config, "model.kind", required=True, kind=str)
    zoo = model_zoo()
    if kind not in zoo:
        raise ConfigError("model.kind", f"unknown model {kind!r}; choose from {sorted(zoo)}")
    return zoo[kind]


def _write_csv(path: Path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _write_manifest(out_dir: Path, config_path: str, seed: int, subcommand: str, files):
    digest = hashlib.sha256(Path(config_path).read_bytes()).hexdigest()
    manifest = {
        "config_sha256": digest,
        "outputs": sorted(files),
        "seed": seed,
        "subcommand": subcommand,
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_verify(config, stream: RngStream, out_dir: Path):
    entry = _zoo_entry(config)
    trials = _lookup(config, "verify.trials", default=100_000, kind=int)
    samples = _lookup(config, "verify.samples", default=100_000, kind=int)
    x, y1, y2 = entry.check_pair
    spec = entry.model.chain_spec()
    reports = [
        check_contractivity(spec, trials, stream.substream(0), env=entry.env),
        check_minorization(spec, entry.minor, x, y1, y2, samples, stream.substream(1)),
        check_support(entry.minor, x, y1, y2, samples, stream.substream(2)),
    ]
    rows = [
        (r.assumption_id, r.trials, r.violations, float(r.worst_margin)) for r in reports
    ]
    _write_csv(out_dir / "verify.csv", HEADERS["verify"], rows)
    return ["verify.csv"]


def _couple_one_n(entry, n, reps, y0, y0p, stream: RngStream):
    """Fixed-size shards keyed by substream index, aggregated in order."""
    failures = 0
    bounds = []
    meetings = []
    done = 0
    shard = 0
    while done < reps:
        size = min(SHARD_SIZE, reps - done)
        res = cpl.run_coupling_batch(
            entry.model, entry.minor, entry.env, y0, y0p, n, size, stream.substream(shard)
        )
        failures += res.failures
        bounds.append(res.bounds)
        meetings.append(res.meeting_times)
        done += size
        shard += 1
    bounds = np.concatenate(bounds)
    se = float(np.std(bounds, ddof=1) / np.sqrt(len(bounds)))
    meetings = np.concatenate(meetings)
    return failures, failures / reps, float(np.mean(bounds)), se, meetings


def _cmd_couple(config, stream: RngStream, out_dir: Path):
    entry = _zoo_entry(config)
    n_grid = _lookup(config, "coupling.n_grid", default=[50, 100, 200], kind=list)
    reps = _lookup(config, "coupling.replications", default=1000, kind=int)
    y0 = float(_lookup(config, "coupling.y0", default=-1.0, kind=(int, float)))
    y0p = float(_lookup(config, "coupling.y0_prime", default=1.0, kind=(int, float)))
    rows = []
    meeting_rows = []
    for i, n in enumerate(n_grid):
        if not isinstance(n, int) or n < 2:
            raise ConfigError("coupling.n_grid", f"entries must be integers >= 2, got {n}")
        log.info("couple: n=%d reps=%d", n, reps)
        failures, rate, mean_bound, se, meetings = _couple_one_n(
            entry, n, reps, y0, y0p, stream.substream(i)
        )
        rows.append((n, reps, failures, float(rate), mean_bound, se))
        meeting_rows.extend((n, int(t)) for t in meetings)
    _write_csv(out_dir / "couple.csv", HEADERS["couple"], rows)
    # one row per replication; meeting_time = -1 when the pair never met
    _write_csv(out_dir / "meeting_times.csv", HEADERS["meeting"], meeting_rows)
    return ["couple.csv", "meeting_times.csv"]


def _cmd_tv(config, stream: RngStream, out_dir: Path):
    entry = _zoo_entry(config)
    n_grid = _lookup(config, "estimation.n_grid", default=[10, 20, 40, 80], kind=list)
    reps = _lookup(config, "estimation.replications", default=20_000, kind=int)
    bins = _lookup(config, "estimation.bins", default=64, kind=int)
    y0 = float(_lookup(config, "coupling.y0", default=-1.0, kind=(int, float)))
    y0p = float(_lookup(config, "coupling.y0_prime", default=1.0, kind=(int, float)))
    spec = entry.model.chain_spec()
    rows = []
    for i, n in enumerate(n_grid):
        sub = stream.substream(i)
        a = simulate_forward_batch(spec, entry.env, [y0] * spec.dim_state, n, reps, sub.substream(0))
        b = simulate_forward_batch(spec, entry.env, [y0p] * spec.dim_state, n, reps, sub.substream(1))
        coords = list(range(min(spec.dim_state, 2)))
        tv, se = est.tv_estimate(a, b, bins=bins, stream=sub.substream(2), coords=coords)
        rows.append((n, float(tv), float(se)))
    _write_csv(out_dir / "tv.csv", HEADERS["curve"], rows)
    return ["tv.csv"]


def _cmd_mix(config, stream: RngStream, out_dir: Path):
    entry = _zoo_entry(config)
    lags = _lookup(config, "estimation.lags", default=list(range(1, 13)), kind=list)
    reps = _lookup(config, "estimation.replications", default=20_000, kind=int)
    length = _lookup(config, "estimation.length", default=max(lags) + 4, kind=int)
    spec = entry.model.chain_spec()
    states = simulate_forward_batch(
        spec, entry.env, [0.0] * spec.dim_state, length, reps, stream.substream(0), keep="all"
    )
    curve = est.mixing_curve(states[:, :, 0], lags, stream=stream.substream(1))
    rows = [(int(n), float(e), float(s))
            for n, e, s in zip(curve.ns, curve.estimates, curve.std_errors)]
    _write_csv(out_dir / "mix.csv", HEADERS["curve"], rows)
    return ["mix.csv"]


def _cmd_var(config, stream: RngStream, out_dir: Path):
    a = float(_lookup(config, "var.a", default=1e-3, kind=(int, float)))
    h = float(_lookup(config, "var.h", default=1e-2, kind=(int, float)))
    alpha_level = float(_lookup(config, "var.alpha_level", default=0.95, kind=(int, float)))
    steps = _lookup(config, "var.steps", default=100_000, kind=int)
    report_every = _lookup(config, "var.report_every", default=max(steps // 10, 1), kind=int)
    loss_csv = _lookup(config, "var.loss_csv", default=None, kind=str)
    if loss_csv is not None:
        losses_data = load_loss_csv(loss_csv)
        env = EnvironmentSpec(kind="empirical", data=losses_data)
    else:
        env = EnvironmentSpec(kind="iid")
    sgld = make_sgld(a=a, h=h, alpha_level=alpha_level, loss_env=env)
    gen = stream.generator()
    losses = env.sample_windows(gen, 1, steps)[0, :, 0]
    if not np.all(np.isfinite(losses)):
        raise NumericOverflowError("loss stream contains non-finite values")
    noise = gen.standard_normal(steps)
    # drive the SGLD recursion along the loss stream (faithful to the
    # sampler; the reported estimates come from the grid argmin)
    y = 0.0
    s = np.sqrt(2.0 * h)
    rows = []
    for t in range(steps):
        x = losses[t]
        H = 1.0 - (x >= y) / (1.0 - alpha_level)
        y = y - 2.0 * a * h * y - h * H + s * noise[t]
        if not np.isfinite(y):
            raise NumericOverflowError(f"SGLD state diverged at step {t}")
        if (t + 1) % report_every == 0 or t + 1 == steps:
            r = extract_var_cvar(losses[: t + 1], a=a, alpha_level=alpha_level)
            rows.append((t + 1, float(r.var), float(r.cvar)))
    _write_csv(out_dir / "var.csv", HEADERS["var"], rows)
    return ["var.csv"]


def _cmd_fit(config, stream: RngStream, out_dir: Path):
    curve_path = _lookup(config, "fit.input", required=True, kind=str)
    template = _lookup(config, "fit.template", default=None, kind=str)
    ns, ests = [], []
    with open(curve_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != HEADERS["curve"]:
            raise ConfigError("fit.input", f"expected header {HEADERS['curve']}, got {header}")
        for row in reader:
            ns.append(float(row[0]))
            ests.append(float(row[1]))
    if template is not None and template not in est.TEMPLATES:
        raise ConfigError("fit.template", f"choose from {est.TEMPLATES}")
    ranked = (
        est.compare_templates(ns, ests)
        if template is None
        else [(template, *est.rate_fit(ns, ests, template))]
    )
    rows = [
        (name, float(resid), json.dumps(params, sort_keys=True))
        for name, params, resid in ranked
    ]
    _write_csv(out_dir / "fit.csv", ["template", "residual", "params"], rows)
    return ["fit.csv"]


COMMANDS = {
    "verify": _cmd_verify,
    "couple": _cmd_couple,
    "tv": _cmd_tv,
    "mix": _cmd_mix,
    "var": _cmd_var,
    "fit": _cmd_fit,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcre", description=__doc__)
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="TOML experiment config")
    parser.add_argument("--seed", type=int, default=None, help="64-bit master seed")
    parser.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="parallelism hint; outputs are worker-count independent")
    parser.add_argument("--out", default=".", help="output directory")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("MCRE_LOG", "WARNING").upper(),
                        format="%(name)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args.config)
        seed = args.seed if args.seed is not None else _lookup(config, "seed", default=0, kind=int)
        if not 0 <= seed < 2**64:
            raise ConfigError("seed", "must fit in an unsigned 64-bit integer")
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        stream = RngStream(seed)
        files = COMMANDS[args.subcommand](config, stream, out_dir)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericOverflowError, FloatingPointError, OverflowError, ZeroDivisionError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    _write_manifest(out_dir, args.config, seed, args.subcommand, files)
    return 0


if __name__ == "__main__":
    sys.exit(main())
