"""Command-line interface.

Subcommands: ``gen``, ``calibrate``, ``detect``, ``power-scan``,
``baseline``, ``diagnose``.  Runs are driven by an INI configuration file
(sections ``[source]``, ``[model]``, ``[pipeline]``, ``[baseline]``,
``[run]``); command-line flags override file values.  Every emitted table
carries the producing configuration hash in its header, and outputs are a
pure function of (config, seed) up to timestamps in the log files.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
divergence, 5 provenance mismatch, 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines as bl
from .benchmarks import (
    benchmark_by_name,
    benchmark_names,
    generate,
    load_feature_file,
    save_feature_file,
)
from .diagnostics import (
    empirical_cdf,
    exponential_cdf,
    export_activations,
    export_histogram,
    export_moran_series,
    export_trajectory,
    moran_spacing,
    score_histogram,
    select_anomalous,
)
from .errors import (
    ConfigError,
    DataError,
    ProvenanceMismatchError,
    SparkerError,
    TrainingDivergedError,
)
from .pipeline import (
    BenchmarkNullSource,
    CalibrationStore,
    PipelineConfig,
    PoolNullSource,
    TestReport,
    calibrate,
    clopper_pearson,
    detect,
    ks_uniformity,
    leave_self_out_pvalues,
)
from .points import data_set, reference_set

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4
EXIT_PROVENANCE = 5

BASELINE_NAMES = ("fixed_center_np", "mmd_fuse", "mahalanobis", "frechet")

# every config key with its documented default; unknown keys are rejected
CONFIG_SCHEMA = {
    "source": {
        "benchmark": "",            # family:kind, e.g. exp1d:extreme_tail
        "reference_file": "",       # alternative to benchmark
        "data_file": "",
        "reference_size": "",       # override benchmark reference size
        "expected_n": "",           # override expected dataset size
        "signal_fraction": "",      # override benchmark signal fraction
        "poisson": "true",          # Poisson-fluctuate dataset sizes
    },
    "model": {
        "n_kernels": "5",
        "n_steps": "20000",
        "n_checkpoints": "4",
        "learning_rate": "0.01",
        "l2": "0.0",
        "clip": "100.0",            # 'none' disables amplitude clipping
        "loss": "np",               # np | bce | mse
        "softmax": "true",
        "sigma_initial": "auto",
        "sigma_final": "auto",
        "record_trajectory": "false",
        "trajectory_stride": "100",
    },
    "pipeline": {
        "n_toys": "100",
        "alpha": "0.05",
        "reference_weight": "auto",
        "score_threshold": "0.95",
        "n_bins": "20",
    },
    "baseline": {
        "n_centers": "5",
        "fc_steps": "3000",
        "nystrom_rank": "256",
        "n_permutations": "200",
        "n_bootstrap": "200",
    },
    "run": {
        "seed": "0",
        "workers": "1",
        "out": "sparker-run",
    },
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def get(self, section, key):
        return self.values[section][key]

    def get_int(self, section, key):
        return int(self.values[section][key])

    def get_float(self, section, key):
        return float(self.values[section][key])

    def get_bool(self, section, key):
        v = self.values[section][key].strip().lower()
        if v in ("true", "yes", "1", "on"):
            return True
        if v in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"[{section}] {key} must be a boolean, got {v!r}")

    def get_optional_float(self, section, key):
        v = self.values[section][key].strip().lower()
        if v in ("", "auto", "none"):
            return None
        return float(v)


def load_config(path: str | None) -> RunConfig:
    values = {s: dict(defaults) for s, defaults in CONFIG_SCHEMA.items()}
    if path:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path}")
        for section in parser.sections():
            if section not in CONFIG_SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, value in parser.items(section):
                if key not in CONFIG_SCHEMA[section]:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                values[section][key] = value
    return RunConfig(values)


def apply_overrides(cfg: RunConfig, args) -> None:
    if getattr(args, "seed", None) is not None:
        cfg.values["run"]["seed"] = str(args.seed)
    if getattr(args, "workers", None) is not None:
        cfg.values["run"]["workers"] = str(args.workers)
    if getattr(args, "out", None):
        cfg.values["run"]["out"] = args.out
    if getattr(args, "benchmark", None):
        cfg.values["source"]["benchmark"] = args.benchmark


def pipeline_config(cfg: RunConfig) -> PipelineConfig:
    clip = cfg.get("model", "clip").strip().lower()
    clip_bound = np.inf if clip in ("none", "inf") else float(clip)
    try:
        return PipelineConfig(
            n_kernels=cfg.get_int("model", "n_kernels"),
            n_steps=cfg.get_int("model", "n_steps"),
            n_checkpoints=cfg.get_int("model", "n_checkpoints"),
            learning_rate=cfg.get_float("model", "learning_rate"),
            l2_coefficient=cfg.get_float("model", "l2"),
            clip_bound=clip_bound,
            loss_kind=cfg.get("model", "loss"),
            softmax_enabled=cfg.get_bool("model", "softmax"),
            sigma_initial=cfg.get_optional_float("model", "sigma_initial"),
            sigma_final=cfg.get_optional_float("model", "sigma_final"),
            reference_weight=cfg.get_optional_float("pipeline", "reference_weight"),
            rng_seed=cfg.get_int("run", "seed"),
            n_workers=cfg.get_int("run", "workers"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def resolved_benchmark(cfg: RunConfig):
    name = cfg.get("source", "benchmark").strip()
    if not name:
        return None
    spec = benchmark_by_name(name)
    ref_size = cfg.get("source", "reference_size").strip()
    if ref_size:
        spec.reference_size = int(ref_size)
    expected = cfg.get("source", "expected_n").strip()
    if expected:
        spec.expected_background = float(expected)
    fraction = cfg.get("source", "signal_fraction").strip()
    if fraction:
        spec.signal_fraction = float(fraction)
    return spec


def load_pair(cfg: RunConfig, seed: int):
    """The (reference, data) pair named by the config source section."""
    spec = resolved_benchmark(cfg)
    if spec is not None:
        return generate(spec, seed, cfg.get_bool("source", "poisson"))
    ref_path = cfg.get("source", "reference_file").strip()
    dat_path = cfg.get("source", "data_file").strip()
    if not ref_path or not dat_path:
        raise ConfigError(
            "source section needs either benchmark=family:kind or both "
            "reference_file and data_file"
        )
    ref = load_feature_file(ref_path)
    dat = load_feature_file(dat_path, expected_dim=ref.dim)
    return reference_set(ref.points), data_set(dat.points)


def null_source(cfg: RunConfig):
    """Anomaly-free source for calibration."""
    spec = resolved_benchmark(cfg)
    poisson = cfg.get_bool("source", "poisson")
    if spec is not None:
        return BenchmarkNullSource(spec, poisson=poisson)
    ref_path = cfg.get("source", "reference_file").strip()
    if not ref_path:
        raise ConfigError("calibration needs a benchmark or a reference_file")
    expected = cfg.get("source", "expected_n").strip()
    if not expected:
        raise ConfigError(
            "calibration from a reference file needs expected_n in [source]"
        )
    ref = load_feature_file(ref_path)
    return PoolNullSource(reference=reference_set(ref.points),
                          expected_n=float(expected), poisson=poisson)


def out_dirs(cfg: RunConfig) -> dict:
    root = Path(cfg.get("run", "out"))
    dirs = {name: root / name for name in ("store", "reports", "exports", "logs")}
    for d in dirs.values():
        d.mkdir(parents=True, exist_ok=True)
    dirs["root"] = root
    return dirs


def write_log(dirs, command: str, lines: list[str]) -> None:
    stamp = time.strftime("%Y-%m-%dT%H:%M:%S")
    with open(dirs["logs"] / f"{command}.log", "a") as fh:
        fh.write(f"[{stamp}] {command}\n")
        for line in lines:
            fh.write(f"  {line}\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    cfg = load_config(args.config)
    apply_overrides(cfg, args)
    spec = resolved_benchmark(cfg)
    if spec is None:
        raise ConfigError("gen needs --benchmark or a config benchmark entry")
    seed = cfg.get_int("run", "seed")
    out = Path(cfg.get("run", "out"))
    out.mkdir(parents=True, exist_ok=True)
    ref, dat = generate(spec, seed, cfg.get_bool("source", "poisson"))
    save_feature_file(out / "reference.csv", ref,
                      comments=[f"role: reference (weight {ref.weight:.17g})"])
    save_feature_file(out / "data.csv", dat, comments=["role: data"])
    manifest = {
        "benchmark": {
            "family": spec.family,
            "signal_kind": spec.signal_kind,
            "signal_fraction": spec.signal_fraction,
            "expected_background": spec.expected_background,
            "reference_size": spec.reference_size,
        },
        "seed": seed,
        "poisson": cfg.get_bool("source", "poisson"),
        "n_reference": int(ref.size),
        "n_data": int(dat.size),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    print(f"wrote {out}/reference.csv ({ref.size} x {ref.dim}), "
          f"{out}/data.csv ({dat.size} x {dat.dim})")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = load_config(args.config)
    apply_overrides(cfg, args)
    pcfg = pipeline_config(cfg)
    source = null_source(cfg)
    n_toys = cfg.get_int("pipeline", "n_toys")
    dirs = out_dirs(cfg)
    t0 = time.time()
    store = calibrate(source, n_toys, pcfg)
    path = dirs["store"] / "calibration.json"
    store.save(path)
    print(f"calibration store: {path} (hash {store.provenance['hash']})")
    print("width    t_q05      t_q50      t_q95      ks_p")
    per_width_p = leave_self_out_pvalues(store.t_samples)
    for s in range(store.num_widths):
        q05, q50, q95 = np.quantile(store.t_samples[s], [0.05, 0.5, 0.95])
        _, ksp = ks_uniformity(per_width_p[s], grid_size=store.n_toys)
        print(f"{store.checkpoint_sigmas[s]:<8.4g} {q05:<10.4g} {q50:<10.4g} "
              f"{q95:<10.4g} {ksp:.3f}")
    write_log(dirs, "calibrate", [
        f"hash {store.provenance['hash']}",
        f"n_toys {n_toys}",
        f"elapsed {time.time() - t0:.1f} s",
    ])
    return EXIT_OK


def _store_path(args, cfg) -> Path:
    if getattr(args, "store", None):
        return Path(args.store)
    return Path(cfg.get("run", "out")) / "store" / "calibration.json"


def cmd_detect(args) -> int:
    cfg = load_config(args.config)
    apply_overrides(cfg, args)
    pcfg = pipeline_config(cfg)
    dirs = out_dirs(cfg)
    store = CalibrationStore.load(_store_path(args, cfg))
    seed = cfg.get_int("run", "seed")
    ref, dat = load_pair(cfg, seed)
    record = cfg.get_bool("model", "record_trajectory")
    report = detect(ref, dat, store, pcfg, record_trajectory=record,
                    trajectory_stride=cfg.get_int("model", "trajectory_stride"))
    rpath = dirs["reports"] / "report.json"
    report.save(rpath)
    h = report.provenance_hash

    def table(path, columns, rows, units):
        with open(path, "w") as fh:
            fh.write(f"# config_hash: {h}\n# units: {units}\n")
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v)
                                  for v in row) + "\n")

    table(dirs["exports"] / "scores.csv",
          ["index", "role", "score"],
          [(i, "data", float(s)) for i, s in enumerate(report.scores_data)]
          + [(i, "reference", float(s)) for i, s in enumerate(report.scores_reference)],
          "anomaly score in (0,1)")
    table(dirs["exports"] / "activations.csv",
          ["index"] + [f"component_{k}" for k in range(report.activations_data.shape[1])],
          [(i, *map(float, row)) for i, row in enumerate(report.activations_data)],
          "per-kernel log-ratio contributions")
    if record and report.trajectory is not None:
        export_trajectory(report.trajectory, dirs["exports"] / "trajectory.csv", h)

    n = store.n_toys
    print(f"report: {rpath}")
    print(f"global p-value: {report.global_p:.6g} "
          f"(achievable range [{1 / (n + 1):.6g}, 1])")
    print(f"combined statistic: {report.combined_statistic:.6g} "
          f"(selected width {report.selected_width:.6g})")
    print("width    t           p")
    for s in range(store.num_widths):
        print(f"{store.checkpoint_sigmas[s]:<8.4g} {report.per_sigma_t[s]:<11.5g} "
              f"{report.per_sigma_p[s]:.6g}")
    write_log(dirs, "detect", [f"hash {h}", f"global_p {report.global_p}"])
    return EXIT_OK


def cmd_power_scan(args) -> int:
    cfg = load_config(args.config)
    apply_overrides(cfg, args)
    pcfg = pipeline_config(cfg)
    dirs = out_dirs(cfg)
    spec = resolved_benchmark(cfg)
    if spec is None:
        raise ConfigError("power-scan needs a benchmark source")
    alpha = cfg.get_float("pipeline", "alpha")
    fractions = [float(f) for f in args.fractions.split(",")]
    repeats = args.repeats
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    seed = cfg.get_int("run", "seed")
    poisson = cfg.get_bool("source", "poisson")

    store = None
    fc_store = None
    if "sparker" in methods:
        store = CalibrationStore.load(_store_path(args, cfg))
    if "fixed_center_np" in methods:
        fc_cfg = _fixed_center_config(cfg)
        fc_store = bl.calibrate_fixed_center(
            null_source(cfg), cfg.get_int("pipeline", "n_toys"), fc_cfg)

    rows = []
    for fraction in fractions:
        from dataclasses import replace as _replace
        fspec = _replace(spec, signal_fraction=fraction,
                         signal_kind=spec.signal_kind if fraction > 0 else "none")
        for method in methods:
            hits = 0
            for r in range(repeats):
                toy_seed = [seed, 7, int(fraction * 1e9), r]
                ref, dat = generate(fspec, toy_seed, poisson)
                if method == "sparker":
                    rep = detect(ref, dat, store, pcfg)
                    hits += rep.global_p <= alpha
                elif method == "fixed_center_np":
                    rep = bl.fixed_center_np_test(ref, dat, fc_store, fc_cfg)
                    hits += rep.global_p <= alpha
                elif method == "mmd_fuse":
                    res = bl.mmd_fuse_test(ref.points, dat.points, _mmd_config(cfg, r))
                    hits += res.p_value <= alpha
                elif method == "mahalanobis":
                    _, p = bl.mahalanobis_test(
                        ref.points, dat.points,
                        n_bootstrap=cfg.get_int("baseline", "n_bootstrap"),
                        rng_seed=r)
                    hits += p <= alpha
                else:
                    raise ConfigError(f"unknown method {method!r} in power scan")
            lo, hi = clopper_pearson(hits, repeats)
            rows.append((method, fraction, hits / repeats, lo, hi, hits, repeats))
            print(f"{method:<16} fraction={fraction:<8g} "
                  f"power={hits / repeats:.3f}  CI68=[{lo:.3f}, {hi:.3f}]")

    h = store.provenance["hash"] if store is not None else "n/a"
    with open(dirs["exports"] / "power_scan.csv", "w") as fh:
        fh.write(f"# config_hash: {h}\n")
        fh.write(f"# units: power = rejection rate at alpha={alpha}\n")
        fh.write("method,fraction,power,ci_low,ci_high,successes,repeats\n")
        for row in rows:
            fh.write(",".join(map(str, row)) + "\n")
    write_log(dirs, "power-scan", [f"fractions {fractions}", f"methods {methods}"])
    return EXIT_OK


def _mmd_config(cfg: RunConfig, seed_offset: int = 0) -> bl.MmdConfig:
    return bl.MmdConfig(
        nystrom_rank=cfg.get_int("baseline", "nystrom_rank"),
        n_permutations=cfg.get_int("baseline", "n_permutations"),
        rng_seed=cfg.get_int("run", "seed") + seed_offset,
    )


def _fixed_center_config(cfg: RunConfig) -> bl.FixedCenterConfig:
    clip = cfg.get("model", "clip").strip().lower()
    return bl.FixedCenterConfig(
        n_centers=cfg.get_int("baseline", "n_centers"),
        n_steps=cfg.get_int("baseline", "fc_steps"),
        learning_rate=cfg.get_float("model", "learning_rate"),
        l2_coefficient=cfg.get_float("model", "l2"),
        clip_bound=np.inf if clip in ("none", "inf") else float(clip),
        reference_weight=cfg.get_optional_float("pipeline", "reference_weight"),
        rng_seed=cfg.get_int("run", "seed"),
        n_workers=cfg.get_int("run", "workers"),
    )


def cmd_baseline(args) -> int:
    cfg = load_config(args.config)
    apply_overrides(cfg, args)
    if args.baseline not in BASELINE_NAMES:
        raise ConfigError(
            f"unknown baseline {args.baseline!r}; expected one of {BASELINE_NAMES}"
        )
    dirs = out_dirs(cfg)
    seed = cfg.get_int("run", "seed")
    ref, dat = load_pair(cfg, seed)
    result: dict = {"baseline": args.baseline, "seed": seed}

    if args.baseline == "frechet":
        value = bl.frechet_distance(ref.points, dat.points)
        result["distance"] = value
        print(f"frechet distance: {value:.6g}")
    elif args.baseline == "mahalanobis":
        stat, p = bl.mahalanobis_test(
            ref.points, dat.points,
            n_bootstrap=cfg.get_int("baseline", "n_bootstrap"), rng_seed=seed)
        result.update(statistic=stat, p_value=p)
        print(f"mahalanobis statistic: {stat:.6g}  p-value: {p:.6g}")
    elif args.baseline == "mmd_fuse":
        res = bl.mmd_fuse_test(ref.points, dat.points, _mmd_config(cfg))
        result.update(statistic=res.statistic, p_value=res.p_value,
                      bandwidths=list(map(float, res.bandwidths)))
        print(f"fused mmd statistic: {res.statistic:.6g}  p-value: {res.p_value:.6g}")
    else:  # fixed_center_np
        fc_cfg = _fixed_center_config(cfg)
        if args.store:
            fc_store = bl.FixedCenterStore.load(args.store)
        else:
            fc_store = bl.calibrate_fixed_center(
                null_source(cfg), cfg.get_int("pipeline", "n_toys"), fc_cfg)
            fc_store.save(dirs["store"] / "fixed_center.json")
        rep = bl.fixed_center_np_test(ref, dat, fc_store, fc_cfg)
        result.update(global_p=rep.global_p, min_p=rep.min_p,
                      per_bandwidth_t=list(map(float, rep.per_bandwidth_t)))
        print(f"fixed-center global p-value: {rep.global_p:.6g}")

    path = dirs["reports"] / f"baseline_{args.baseline}.json"
    with open(path, "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
    write_log(dirs, "baseline", [args.baseline])
    return EXIT_OK


def cmd_diagnose(args) -> int:
    cfg = load_config(args.config)
    apply_overrides(cfg, args)
    dirs = out_dirs(cfg)
    report = TestReport.load(args.report)
    store = CalibrationStore.load(_store_path(args, cfg))
    if report.provenance_hash != store.provenance.get("hash"):
        raise ProvenanceMismatchError("report and store hashes differ")
    h = report.provenance_hash

    if store.null_scores is not None:
        hist = score_histogram(report, store.null_scores,
                               n_bins=cfg.get_int("pipeline", "n_bins"))
        export_histogram(hist, dirs["exports"] / "score_histogram.csv", h)
        print(f"score histogram -> {dirs['exports'] / 'score_histogram.csv'}")

    threshold = cfg.get_float("pipeline", "score_threshold")
    sel = select_anomalous(report, threshold)
    export_activations(sel, dirs["exports"] / "selected_activations.csv", h)
    print(f"{sel.indices.size} points above score {threshold} "
          f"-> {dirs['exports'] / 'selected_activations.csv'}")

    if args.trajectory:
        traj = _read_trajectory_csv(args.trajectory)
        if traj.locations.shape[2] != 1:
            raise DataError("the spacing diagnostic needs 1-d locations")
        spec = resolved_benchmark(cfg)
        if spec is not None and spec.family == "exp1d":
            cdf = exponential_cdf()
        else:
            ref, _ = load_pair(cfg, cfg.get_int("run", "seed"))
            cdf = empirical_cdf(ref.points[:, 0])
        series = np.array([
            moran_spacing(traj.locations[i], cdf)
            for i in range(traj.steps.size)
        ])
        export_moran_series(traj, series, dirs["exports"] / "moran_series.csv", h)
        print(f"spacing series -> {dirs['exports'] / 'moran_series.csv'}")
    write_log(dirs, "diagnose", [f"report {args.report}"])
    return EXIT_OK


def _read_trajectory_csv(path):
    """Rebuild a trajectory log from its long-format export."""
    from .training import TrajectoryLog
    rows = []
    try:
        with open(path) as fh:
            for line in fh:
                if line.startswith("#") or line.startswith("step,"):
                    continue
                step, width, kernel, kind, coord, value = line.strip().split(",")
                rows.append((int(step), float(width), int(kernel), kind,
                             int(coord), float(value)))
    except OSError as exc:
        raise DataError(f"cannot read trajectory {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty trajectory")
    steps = sorted({r[0] for r in rows})
    kernels = sorted({r[2] for r in rows})
    dims = sorted({r[4] for r in rows if r[3] == "location"})
    widths = {r[0]: r[1] for r in rows}
    locs = np.zeros((len(steps), len(kernels), len(dims)))
    amps = np.zeros((len(steps), len(kernels)))
    step_ix = {s: i for i, s in enumerate(steps)}
    for step, _, kernel, kind, coord, value in rows:
        if kind == "location":
            locs[step_ix[step], kernel, coord] = value
        else:
            amps[step_ix[step], kernel] = value
    return TrajectoryLog(
        steps=np.array(steps, dtype=np.int64),
        widths=np.array([widths[s] for s in steps]),
        locations=locs,
        amplitudes=amps,
    )


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparker",
        description="Sparse competing-kernel anomaly detection pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--workers", type=int, help="worker-thread override")
        p.add_argument("--out", help="output directory override")

    p = sub.add_parser("gen", help="generate benchmark feature files")
    common(p)
    p.add_argument("--benchmark",
                   help=f"benchmark name, one of: {', '.join(benchmark_names())}")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("calibrate", help="build the anomaly-free calibration store")
    common(p)
    p.add_argument("--benchmark", help="benchmark override")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("detect", help="test a dataset against a calibration store")
    common(p)
    p.add_argument("--benchmark", help="benchmark override")
    p.add_argument("--store", help="calibration store path")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("power-scan", help="detection power versus signal fraction")
    common(p)
    p.add_argument("--benchmark", help="benchmark override")
    p.add_argument("--store", help="calibration store path")
    p.add_argument("--fractions", required=True,
                   help="comma-separated signal fractions")
    p.add_argument("--repeats", type=int, default=50)
    p.add_argument("--methods", default="sparker",
                   help="comma-separated: sparker,fixed_center_np,mmd_fuse,mahalanobis")
    p.set_defaults(func=cmd_power_scan)

    p = sub.add_parser("baseline", help="run a comparison method")
    common(p)
    p.add_argument("baseline", choices=BASELINE_NAMES)
    p.add_argument("--benchmark", help="benchmark override")
    p.add_argument("--store", help="baseline calibration store path")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("diagnose", help="export interpretability tables")
    common(p)
    p.add_argument("--benchmark", help="benchmark override")
    p.add_argument("--report", required=True, help="report JSON path")
    p.add_argument("--store", help="calibration store path")
    p.add_argument("--trajectory", help="trajectory CSV from detect")
    p.set_defaults(func=cmd_diagnose)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergedError as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except ProvenanceMismatchError as exc:
        print(f"provenance mismatch: {exc}", file=sys.stderr)
        return EXIT_PROVENANCE
    except SparkerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
