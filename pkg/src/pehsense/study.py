"""Study-matrix orchestration behind the command-line tool.

Each ``run_*`` function takes a validated :class:`ExperimentConfig` and an
output directory and writes CSV artifacts. Cells of the factorial study are
isolated: a failing simulation or classifier becomes an error row, never an
aborted sweep.
"""
from __future__ import annotations

import csv
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, anomaly, ml
from .config import CSV, MAT, SYNTHETIC, ConfigError, ExperimentConfig
from .dataset import (RESISTIVE, SEH, EnergyFeatureTable, benchmark_specs, build_feature_table,
                      fuse, kfold_split, read_mat_trace, synth_trace, truncate, write_feature_csv)
from .harvester import frf, simulate_resistive_batch
from .kernels import BACKEND
from .seh import simulate_seh_batch
from .signal import AccelerationTrace, cumulative_energy, read_trace_csv, window_events, write_trace_csv
from .stiefel import PerturbationConfig, augment

log = logging.getLogger(__name__)

N_CURVE_POINTS = 20
FRF_BAND_HZ = (10.0, 1000.0)
FRF_POINTS = 400


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def write_rows(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def read_rows(path: Path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# --- data ---------------------------------------------------------------------

@dataclass
class Traces:
    by_label: dict  # label -> [AccelerationTrace], each truncated to data.duration_s
    healthy_surplus: list  # remainder of the healthy recording, reserved for anomaly fitting


def load_traces(cfg: ExperimentConfig) -> Traces:
    d = cfg.data
    healthy = cfg.anomaly.healthy_label
    by_label, surplus = {}, []
    if d.source == SYNTHETIC:
        for spec in benchmark_specs(d.duration_s, d.sample_rate_Hz, d.noise_rms_ms2):
            extra = d.healthy_extra_s if spec.label == healthy else 0.0
            if extra:
                spec = type(spec)(spec.harmonics, spec.noise_rms, d.duration_s + extra,
                                  spec.sample_rate, spec.label)
            rng = np.random.default_rng([cfg.experiment.seed, spec.label])
            tr = synth_trace(spec, rng, f"synthetic:s{cfg.experiment.seed}:L{spec.label}")
            head, tail = truncate(tr, d.duration_s)
            by_label[spec.label] = [head]
            if tail is not None:
                surplus.append(tail)
        return Traces(by_label, surplus)
    root = cfg.resolve(d.directory)
    for i, lf in enumerate(d.files):
        path = root / lf.file
        try:
            if d.source == MAT:
                tr = read_mat_trace(path, d.variable_pattern, d.sample_rate_Hz, lf.label)
            else:
                tr = read_trace_csv(path, label=lf.label, sample_rate=d.sample_rate_Hz)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"data.files[{i}].file", f"cannot read {str(path)!r}: {exc}") from exc
        head, tail = truncate(tr, d.duration_s)
        by_label.setdefault(lf.label, []).append(head)
        if lf.label == healthy and tail is not None:
            surplus.append(tail)
    return Traces(by_label, surplus)


def _variants(cfg: ExperimentConfig):
    """``(circuit, capacitance_uF)`` pairs; resistive has no capacitance."""
    out = []
    for kind in cfg.circuit.kinds:
        if kind == RESISTIVE:
            out.append((RESISTIVE, None))
        else:
            out.extend((SEH, c) for c in cfg.circuit.capacitance_uF)
    return out


def _time_points(cfg, window_s):
    return list(cfg.circuit.time_points_s) or [window_s]


def _single_table(cfg, traces, device, variant, window_s):
    circuit, cap = variant
    if circuit == RESISTIVE:
        return build_feature_table(traces, [device], RESISTIVE, window_s)
    return build_feature_table(traces, [device], SEH, window_s, _time_points(cfg, window_s),
                               cfg.seh_params(cap))


def _variant_tag(variant):
    circuit, cap = variant
    return circuit if cap is None else f"{circuit}_{cap:g}uF"


# --- simulate -----------------------------------------------------------------

def run_simulate(cfg: ExperimentConfig, out: Path) -> list:
    """One trace CSV per (device, input trace, circuit variant)."""
    traces = load_traces(cfg)
    written = []
    for dev, variant in itertools.product(cfg.device_bank(), _variants(cfg)):
        circuit, cap = variant
        for label in sorted(traces.by_label):
            trs = traces.by_label[label]
            if circuit == RESISTIVE:
                outs = simulate_resistive_batch(dev, trs)
                col = "voltage_V"
            else:
                outs = [vc for vc, _ in simulate_seh_batch(dev, cfg.seh_params(cap), trs)]
                col = "capacitor_voltage_V"
            for j, v in enumerate(outs):
                path = out / "simulate" / _variant_tag(variant) / f"{_slug(dev.name)}_L{label}_{j}.csv"
                path.parent.mkdir(parents=True, exist_ok=True)
                write_trace_csv(path, v, col)
                written.append(path)
    return written


def _slug(name: str) -> str:
    return name.replace(" ", "")


# --- featurize ----------------------------------------------------------------

def run_featurize(cfg: ExperimentConfig, out: Path) -> list:
    traces = load_traces(cfg).by_label
    written = []
    bank = cfg.device_bank()
    for variant, w in itertools.product(_variants(cfg), cfg.study.window_s):
        tables = [_single_table(cfg, traces, d, variant, w) for d in bank]
        table = fuse(*tables)
        path = out / "features" / f"features_{_variant_tag(variant)}_{w:g}s.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        write_feature_csv(path, table)
        write_rows(path.with_name(path.stem + "_columns.csv"), ["column", "feature"],
                   [(f"f{i}", n) for i, n in enumerate(table.feature_names)])
        written.append(path)
    return written


# --- augment ------------------------------------------------------------------

def _augment_seed(rng_seed: int, label: int, index: int) -> int:
    return int(np.random.SeedSequence([rng_seed, label, index]).generate_state(1, np.uint64)[0])


@dataclass
class AugmentedSet:
    seeds: dict  # label -> [AccelerationTrace]
    tests: dict
    synthetic: dict
    manifest: list  # rows: (file, label, seed_file, beta, rng_seed)


def split_signals(cfg: ExperimentConfig, traces: dict):
    """Cut each label's recording into signals and split them into seed and test sets."""
    a = cfg.augmentation
    seeds, tests = {}, {}
    for label in sorted(traces):
        signals = [s for tr in traces[label] for s in window_events(tr, a.signal_s)]
        need = a.seed_signals_per_label + a.test_signals_per_label
        if len(signals) < need:
            raise ConfigError("augmentation.seed_signals_per_label",
                              f"label {label} has {len(signals)} signals of {a.signal_s} s, needs {need}")
        order = np.random.default_rng([a.rng_seed, label, 0x5EED]).permutation(len(signals))[:need]
        picked = [signals[i] for i in order]
        seeds[label] = [AccelerationTrace(s.samples, s.sample_rate, label, s.source_id)
                        for s in picked[:a.seed_signals_per_label]]
        tests[label] = [AccelerationTrace(s.samples, s.sample_rate, label, s.source_id)
                        for s in picked[a.seed_signals_per_label:]]
    return seeds, tests


def augment_signals(cfg: ExperimentConfig, seeds: dict, beta: float):
    a = cfg.augmentation
    synthetic, manifest = {}, []
    for label in sorted(seeds):
        synthetic[label] = []
        for i in range(a.count_per_label):
            k = i % len(seeds[label])
            src = seeds[label][k]
            seed = _augment_seed(a.rng_seed, label, i)
            pc = PerturbationConfig(beta, seed, a.m, a.n, a.pad_or_overlap)
            x = augment(src.samples, pc)
            name = f"L{label}_{i:04d}.csv"
            synthetic[label].append(AccelerationTrace(x, src.sample_rate, label, f"augmented:{name}"))
            manifest.append((name, label, f"seeds/L{label}_{k:02d}.csv", k, beta, seed,
                             a.m, a.n, a.pad_or_overlap))
    return synthetic, manifest


MANIFEST_HEADER = ["file", "label", "seed_file", "seed_index", "beta", "rng_seed", "m", "n", "strategy"]


def run_augment(cfg: ExperimentConfig, out: Path) -> AugmentedSet:
    traces = load_traces(cfg).by_label
    seeds, tests = split_signals(cfg, traces)
    synthetic, manifest = augment_signals(cfg, seeds, cfg.augmentation.beta)
    root = out / "augment"
    for sub, group in (("seeds", seeds), ("test", tests)):
        (root / sub).mkdir(parents=True, exist_ok=True)
        for label, trs in group.items():
            for k, tr in enumerate(trs):
                write_trace_csv(root / sub / f"L{label}_{k:02d}.csv", tr)
    (root / "synthetic").mkdir(parents=True, exist_ok=True)
    for label, trs in synthetic.items():
        for i, tr in enumerate(trs):
            write_trace_csv(root / "synthetic" / f"L{label}_{i:04d}.csv", tr)
    write_rows(root / "manifest.csv", MANIFEST_HEADER, manifest)
    return AugmentedSet(seeds, tests, synthetic, manifest)


# --- study --------------------------------------------------------------------

RESULT_HEADER = ["cell", "device_set", "circuit", "capacitance_uF", "window_s", "classifier",
                 "n_events", "n_features", "accuracy", "status", "error"]


@dataclass
class StudyOutcome:
    n_cells: int
    n_failed: int
    out: Path


def _cell_rows_for(cfg, tables, ds, variant, window, kind, cell_id, fold_cache):
    circuit, cap = variant
    base = [cell_id, "+".join(ds), circuit, "" if cap is None else cap, window, kind]
    try:
        parts = []
        for name in ds:
            t = tables[(name, variant, window)]
            if isinstance(t, Exception):
                raise t
            parts.append(t)
        table = fuse(*parts)
        key = (variant, window)
        folds = fold_cache.get(key)
        if isinstance(folds, Exception):
            raise folds
        if folds is None:
            folds = kfold_split(table, cfg.study.k_folds, cfg.experiment.seed)
        res = ml.cross_validate(kind, table, folds, cfg.hyperparams(kind), cfg.experiment.seed)
        return base + [len(table), table.n_features, res.accuracy, "ok", ""], res.confusion
    except Exception as exc:  # isolate the cell
        log.warning("cell %d failed: %s", cell_id, exc)
        return base + ["", "", "", "error", f"{type(exc).__name__}: {exc}"], None


def accumulated_energy(device, events):
    """``(times, E)`` with ``E[i, j]`` the load energy of event ``i`` up to ``times[j]``."""
    volts = simulate_resistive_batch(device, events)
    times = np.arange(1, len(events[0]) + 1) / events[0].sample_rate
    return times, np.stack([cumulative_energy(v, device.R_l) for v in volts])


def fit_slope(times, energy):
    """Least-squares line ``E = slope * t + intercept``."""
    A = np.column_stack([times, np.ones_like(times)])
    (slope, icpt), *_ = np.linalg.lstsq(A, energy, rcond=None)
    return float(slope), float(icpt)


def _curves(cfg, traces, devices, window):
    slope_rows, cov_rows = [], []
    for dev in devices:
        for label in sorted(traces):
            events = [e for tr in traces[label] for e in window_events(tr, window)]
            t_full, full = accumulated_energy(dev, events)
            idx = np.unique(np.round(np.linspace(0, t_full.size - 1, N_CURVE_POINTS + 1)[1:]).astype(int))
            times, E = t_full[idx], full[:, idx]
            per_event = [fit_slope(t_full, row)[0] for row in full]
            slope, icpt = fit_slope(t_full, full.mean(axis=0))
            slope_rows.append((dev.name, label, window, len(events), slope, icpt,
                               float(np.std(per_event, ddof=1)) if len(per_event) > 1 else 0.0))
            mean = E.mean(axis=0)
            sd = E.std(axis=0, ddof=1) if len(events) > 1 else np.zeros_like(mean)
            for t, m, s in zip(times, mean, sd):
                cov_rows.append((dev.name, label, float(t), float(m), float(s / m) if m > 0 else float("nan")))
    return slope_rows, cov_rows


def _beta_sweep(cfg, traces, out):
    a = cfg.augmentation
    kind = cfg.study.classifiers[0]
    ds = cfg.device_sets()[0]
    window = min(max(cfg.study.window_s), a.signal_s)
    bank = {d.name: d for d in cfg.device_bank()}
    rows = []
    seeds, tests = split_signals(cfg, traces)

    def table(group):
        return fuse(*[build_feature_table(group, [bank[n]], RESISTIVE, window) for n in ds])

    for beta in cfg.study.beta_sweep:
        base = ["+".join(ds), kind, window, float(beta)]
        try:
            synthetic, _ = augment_signals(cfg, seeds, float(beta))
            tr_table = table(synthetic)
            folds = kfold_split(tr_table, cfg.study.k_folds, cfg.experiment.seed)
            val = ml.cross_validate(kind, tr_table, folds, cfg.hyperparams(kind), cfg.experiment.seed)
            row = base + [len(tr_table), "", val.accuracy, "", "ok", ""]
            if a.test_signals_per_label:
                te_table = table(tests)
                model = ml.train(kind, tr_table, cfg.hyperparams(kind), cfg.experiment.seed)
                acc = float(np.mean(model.predict(te_table.features) == te_table.labels))
                row[5], row[7] = len(te_table), acc
            rows.append(row)
        except Exception as exc:
            log.warning("beta %s failed: %s", beta, exc)
            rows.append(base + ["", "", "", "", "error", f"{type(exc).__name__}: {exc}"])
    write_rows(out / "beta_sweep.csv", ["device_set", "classifier", "window_s", "beta", "n_train",
                                        "n_test", "validation_accuracy", "testing_accuracy",
                                        "status", "error"], rows)
    return sum(r[8] == "error" for r in rows), len(rows)


def run_study(cfg: ExperimentConfig, out: Path, jobs: int | None = None) -> StudyOutcome:
    jobs = jobs or cfg.experiment.jobs
    traces = load_traces(cfg).by_label
    bank = {d.name: d for d in cfg.device_bank()}
    sets = cfg.device_sets()
    needed = sorted({n for s in sets for n in s}, key=list(bank).index)
    variants = _variants(cfg)
    tables = {}
    for name, variant, w in itertools.product(needed, variants, cfg.study.window_s):
        try:
            tables[(name, variant, w)] = _single_table(cfg, traces, bank[name], variant, w)
        except Exception as exc:
            log.warning("features for %s %s %g s failed: %s", name, _variant_tag(variant), w, exc)
            tables[(name, variant, w)] = exc

    cells = list(itertools.product(sets, variants, cfg.study.window_s, cfg.study.classifiers))
    fold_cache = {}
    for variant, w in itertools.product(variants, cfg.study.window_s):
        ok = [t for (n, v, ww), t in tables.items() if v == variant and ww == w and not isinstance(t, Exception)]
        if ok:
            try:
                fold_cache[(variant, w)] = kfold_split(ok[0], cfg.study.k_folds, cfg.experiment.seed)
            except ValueError as exc:
                fold_cache[(variant, w)] = exc

    def work(i):
        ds, variant, w, kind = cells[i]
        return _cell_rows_for(cfg, tables, ds, variant, w, kind, i, fold_cache)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, range(len(cells))))
    else:
        results = [work(i) for i in range(len(cells))]

    # single writer, cell order
    write_rows(out / "results.csv", RESULT_HEADER, [r for r, _ in results])
    for (row, cm) in results:
        if cm is not None:
            ml.write_confusion_csv(cm, _ensure(out / "confusion") / f"cell_{row[0]:04d}.csv")
    n_failed = sum(r[9] == "error" for r, _ in results)

    for variant, w in itertools.product(variants, cfg.study.window_s):
        parts = [tables[(n, variant, w)] for n in needed]
        if not any(isinstance(t, Exception) for t in parts):
            write_feature_csv(_ensure(out / "features") / f"features_{_variant_tag(variant)}_{w:g}s.csv",
                              fuse(*parts))
            write_rows(out / "features" / f"features_{_variant_tag(variant)}_{w:g}s_columns.csv",
                       ["column", "feature"], [(f"f{i}", n) for i, n in enumerate(fuse(*parts).feature_names)])
    freqs = np.linspace(FRF_BAND_HZ[0], FRF_BAND_HZ[1], FRF_POINTS)
    write_rows(out / "frf.csv", ["device", "frequency_Hz", "magnitude_V_per_ms2", "phase_rad"],
               [(n, float(f), float(m), float(p)) for n in needed
                for f, m, p in zip(freqs, *_frf_cols(bank[n], freqs))])

    window = max(cfg.study.window_s)
    slope_rows, cov_rows = _curves(cfg, traces, [bank[n] for n in needed], window)
    write_rows(out / "slopes.csv", ["device", "label", "window_s", "n_events", "slope_W",
                                    "intercept_J", "slope_std_W"], slope_rows)
    write_rows(out / "cov.csv", ["device", "label", "time_s", "mean_energy_J", "cov"], cov_rows)

    n_cells = len(cells)
    if cfg.study.beta_sweep:
        f, n = _beta_sweep(cfg, traces, out)
        n_failed += f
        n_cells += n
    if cfg.anomaly.enabled:
        run_anomaly(cfg, out)
    write_rows(out / "report_meta.csv", ["key", "value"], [
        ("toolkit_version", __version__),
        ("config_digest", cfg.digest()),
        ("backend", BACKEND),
        ("n_cells", n_cells),
        ("n_failed", n_failed),
    ])
    return StudyOutcome(n_cells, n_failed, out)


def _frf_cols(device, freqs):
    curve = frf(device, freqs)
    return curve.magnitude, curve.phase


def _ensure(p: Path) -> Path:
    p.mkdir(parents=True, exist_ok=True)
    return p


# --- anomaly ------------------------------------------------------------------

@dataclass
class AnomalyOutcome:
    model: anomaly.GaussianAnomalyModel
    accuracy: float
    summary: anomaly.DetectionSummary


def fit_healthy(events, healthy_label: int, energies, z_threshold: float):
    bad = sorted({ev.label for ev in events if ev.label != healthy_label})
    if bad:
        raise ConfigError("anomaly.healthy_label",
                          f"fitting set must hold only label {healthy_label}, found labels {bad}")
    return anomaly.fit(energies, z_threshold)


def run_anomaly(cfg: ExperimentConfig, out: Path) -> AnomalyOutcome:
    an = cfg.anomaly
    loaded = load_traces(cfg)
    bank = {d.name: d for d in cfg.device_bank()}
    if an.device not in bank:
        raise ConfigError("anomaly.device", f"unknown device {an.device!r}")
    dev = bank[an.device]
    fit_events = [AccelerationTrace(e.samples, e.sample_rate, an.healthy_label, e.source_id)
                  for tr in loaded.healthy_surplus for e in window_events(tr, an.window_s)]
    if len(fit_events) < 3:
        raise ConfigError("data.healthy_extra_s",
                          "not enough surplus healthy recording to fit the anomaly model")
    fit_events = fit_events[:an.fit_events]
    fit_table = build_feature_table({an.healthy_label: fit_events}, [dev], RESISTIVE, an.window_s)
    model = fit_healthy(fit_events, an.healthy_label, fit_table.features[:, 0], an.z_threshold)

    table = build_feature_table(loaded.by_label, [dev], RESISTIVE, an.window_s)
    e = table.features[:, 0]
    z = anomaly.score(model, e)
    flag = np.atleast_1d(anomaly.is_anomalous(model, e))
    truth = table.labels != an.healthy_label
    acc = float(np.mean(flag == truth))
    summary = anomaly.evaluate(model, e[~truth], e[truth])
    write_rows(out / "anomaly_events.csv", ["event_id", "label", "energy_J", "z", "decision", "correct"],
               [(int(i), int(l), float(ei), float(zi), anomaly.ANOMALOUS if f else anomaly.HEALTHY, int(f == t))
                for i, l, ei, zi, f, t in zip(table.event_ids, table.labels, e, np.atleast_1d(z), flag, truth)])
    lo = model.mu - model.z_threshold * model.sigma
    hi = model.mu + model.z_threshold * model.sigma
    write_rows(out / "anomaly_summary.csv", ["key", "value"], [
        ("device", dev.name),
        ("healthy_label", an.healthy_label),
        ("window_s", an.window_s),
        ("n_fit", model.n_samples),
        ("mu_J", model.mu),
        ("sigma_J", model.sigma),
        ("z_threshold", model.z_threshold),
        ("threshold_low_J", lo),
        ("threshold_high_J", hi),
        ("n_events", len(table)),
        ("false_alarms", summary.false_alarms),
        ("detections", summary.detections),
        ("n_faulty", summary.n_faulty),
        ("accuracy", acc),
    ])
    return AnomalyOutcome(model, acc, summary)
