"""Static SVG figures rebuilt from the study CSVs alone.

Nothing here touches the simulators: given an output directory written by
``study``, :func:`render_all` can regenerate every figure offline.
"""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "pehsense"
_META = {"Date": None}


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def plot_accuracy(results_csv, path):
    """Accuracy per device set at each window, one panel per classifier."""
    rows = [r for r in _rows(results_csv) if r["status"] == "ok"]
    if not rows:
        return None
    kinds = sorted({r["classifier"] for r in rows})
    fig, axes = plt.subplots(len(kinds), 1, figsize=(8, 3 * len(kinds)), squeeze=False)
    for ax, kind in zip(axes[:, 0], kinds):
        sub = [r for r in rows if r["classifier"] == kind]
        sets = list(dict.fromkeys(r["device_set"] for r in sub))
        series = defaultdict(dict)
        for r in sub:
            key = f"{r['circuit']} {r['capacitance_uF']}uF" if r["capacitance_uF"] else r["circuit"]
            series[(key, float(r["window_s"]))][r["device_set"]] = float(r["accuracy"])
        width = 0.8 / max(len(series), 1)
        x = np.arange(len(sets))
        for i, (key, acc) in enumerate(sorted(series.items())):
            ax.bar(x + i * width, [100 * acc.get(s, np.nan) for s in sets], width,
                   label=f"{key[0]}, {key[1]:g} s")
        ax.set_xticks(x + width * (len(series) - 1) / 2)
        ax.set_xticklabels(sets, rotation=30, ha="right", fontsize=7)
        ax.set_ylabel("accuracy [%]")
        ax.set_ylim(0, 100)
        ax.set_title(kind)
        ax.legend(fontsize=7)
    return _save(fig, path)


def plot_confusion(confusion_csv, path, title=""):
    with open(confusion_csv, encoding="utf-8") as fh:
        rows = [ln.strip().split(",") for ln in fh if ln.strip()]
    labels = rows[0][1:]
    counts = np.array([[int(x) for x in r[1:]] for r in rows[1:]])
    fig, ax = plt.subplots(figsize=(5, 4.5))
    ax.imshow(counts, cmap="Blues")
    for i in range(counts.shape[0]):
        for j in range(counts.shape[1]):
            if counts[i, j]:
                ax.text(j, i, str(counts[i, j]), ha="center", va="center", fontsize=7)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels)
    ax.set_yticks(range(len(labels)))
    ax.set_yticklabels(labels)
    ax.set_xlabel("predicted label")
    ax.set_ylabel("true label")
    acc = np.trace(counts) / max(counts.sum(), 1)
    ax.set_title(f"{title} ({100 * acc:.2f}%)".strip())
    return _save(fig, path)


def plot_frf(frf_csv, path):
    rows = _rows(frf_csv)
    by_dev = defaultdict(list)
    for r in rows:
        by_dev[r["device"]].append((float(r["frequency_Hz"]), float(r["magnitude_V_per_ms2"])))
    fig, ax = plt.subplots(figsize=(7, 4))
    for dev, pts in by_dev.items():
        f, m = np.array(pts).T
        ax.semilogy(f, m, label=dev, lw=1)
    ax.set_xlabel("frequency [Hz]")
    ax.set_ylabel("|V / a| [V s²/m]")
    ax.legend(fontsize=6, ncol=2)
    return _save(fig, path)


def plot_accumulated(cov_csv, path, device):
    rows = [r for r in _rows(cov_csv) if r["device"] == device]
    by_label = defaultdict(list)
    for r in rows:
        by_label[int(r["label"])].append((float(r["time_s"]), float(r["mean_energy_J"]), float(r["cov"])))
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    for label in sorted(by_label):
        t, e, c = np.array(by_label[label]).T
        a1.plot(t, e * 1e6, label=f"Label {label}", lw=1)
        a2.plot(t, c, lw=1)
    a1.set_xlabel("time [s]")
    a1.set_ylabel("accumulated energy [µJ]")
    a1.legend(fontsize=6, ncol=2)
    a2.set_xlabel("time [s]")
    a2.set_ylabel("CoV")
    fig.suptitle(device)
    return _save(fig, path)


def plot_anomaly(events_csv, summary_csv, path):
    ev = _rows(events_csv)
    summ = {r["key"]: r["value"] for r in _rows(summary_csv)}
    healthy = int(summ["healthy_label"])
    fig, ax = plt.subplots(figsize=(7, 3.5))
    by_label = defaultdict(list)
    for r in ev:
        by_label[int(r["label"])].append(float(r["energy_J"]))
    for label in sorted(by_label):
        ax.hist(np.array(by_label[label]) * 1e6, bins=15, alpha=0.5 if label != healthy else 0.9,
                label=f"Label {label}{' (healthy)' if label == healthy else ''}")
    for key in ("threshold_low_J", "threshold_high_J"):
        ax.axvline(float(summ[key]) * 1e6, color="k", ls="--", lw=1)
    ax.set_xlabel("energy [µJ]")
    ax.set_ylabel("events")
    ax.set_title(f"{summ['device']}: z = {float(summ['z_threshold']):g}, accuracy {100 * float(summ['accuracy']):.1f}%")
    ax.legend(fontsize=6, ncol=2)
    return _save(fig, path)


def plot_beta(beta_csv, path):
    rows = [r for r in _rows(beta_csv) if r["status"] == "ok"]
    if not rows:
        return None
    b = [float(r["beta"]) for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(b, [100 * float(r["validation_accuracy"]) for r in rows], "o-", label="validation")
    test = [100 * float(r["testing_accuracy"]) if r["testing_accuracy"] else np.nan for r in rows]
    ax.plot(b, test, "s--", label="testing")
    ax.set_xlabel("β")
    ax.set_ylabel("accuracy [%]")
    ax.legend()
    return _save(fig, path)


def plot_histograms(features_csv, columns_csv, path):
    """Per-label energy histograms for every feature column."""
    feats = _rows(features_csv)
    names = [r["feature"] for r in _rows(columns_csv)]
    labels = np.array([int(r["label"]) for r in feats])
    X = np.array([[float(r[f"f{i}"]) for i in range(len(names))] for r in feats])
    ncol = min(len(names), 5)
    nrow = int(np.ceil(len(names) / ncol))
    fig, axes = plt.subplots(nrow, ncol, figsize=(3 * ncol, 2.4 * nrow), squeeze=False)
    for i, name in enumerate(names):
        ax = axes.flat[i]
        for lab in np.unique(labels):
            ax.hist(X[labels == lab, i] * 1e6, bins=12, alpha=0.5)
        ax.set_title(name, fontsize=8)
        ax.tick_params(labelsize=6)
    for ax in list(axes.flat)[len(names):]:
        ax.axis("off")
    return _save(fig, path)


def render_all(out_dir) -> list:
    out = Path(out_dir)
    figs = out / "figures"
    figs.mkdir(parents=True, exist_ok=True)
    made = []
    if (out / "results.csv").exists():
        made.append(plot_accuracy(out / "results.csv", figs / "accuracy.svg"))
        rows = [r for r in _rows(out / "results.csv") if r["status"] == "ok"]
        best = {}
        for r in rows:
            key = (r["circuit"], r["capacitance_uF"], r["window_s"])
            if key not in best or float(r["accuracy"]) > float(best[key]["accuracy"]):
                best[key] = r
        for r in best.values():
            cm = out / "confusion" / f"cell_{int(r['cell']):04d}.csv"
            if cm.exists():
                made.append(plot_confusion(cm, figs / f"confusion_cell_{int(r['cell']):04d}.svg",
                                           f"{r['device_set']}, {r['classifier']}, {r['window_s']} s"))
    if (out / "frf.csv").exists():
        made.append(plot_frf(out / "frf.csv", figs / "frf.svg"))
    if (out / "cov.csv").exists():
        for dev in dict.fromkeys(r["device"] for r in _rows(out / "cov.csv")):
            made.append(plot_accumulated(out / "cov.csv", figs / f"accumulated_{dev.replace(' ', '')}.svg", dev))
    if (out / "anomaly_events.csv").exists():
        made.append(plot_anomaly(out / "anomaly_events.csv", out / "anomaly_summary.csv", figs / "anomaly.svg"))
    if (out / "beta_sweep.csv").exists():
        made.append(plot_beta(out / "beta_sweep.csv", figs / "beta_sweep.svg"))
    for fc in sorted((out / "features").glob("features_*s.csv")) if (out / "features").exists() else []:
        cols = fc.with_name(fc.stem + "_columns.csv")
        if cols.exists():
            made.append(plot_histograms(fc, cols, figs / f"hist_{fc.stem}.svg"))
    return [m for m in made if m is not None]
