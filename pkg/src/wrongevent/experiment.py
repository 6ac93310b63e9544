"""Config-driven runs that persist their artifacts into a run directory.

A run directory holds ``config.json`` (the resolved config), ``metrics.csv``,
``weights_final.csv``, ``bank_final.csv``, ``base.ckpt``, ``final.ckpt`` and
``summary.json``. The summary carries sha256 digests of every other artifact
and nothing machine- or time-dependent, so identical config and seed give an
identical summary.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .config import dump_config, train_config
from .datagen import (
    apply_transition,
    asymmetric_noise_matrix,
    instance_noise,
    load_csv,
    make_gaussian_clusters,
    save_csv,
    symmetric_noise_matrix,
)
from .errors import OutputExistsError, WrongEventError
from .evaluation import METRICS, compare_metrics, prf_at_threshold, write_table_csv
from .net import save_checkpoint
from .seeding import derive_seed
from .trainer import run_two_stage, stage1, stage2, train_ce_baseline

log = logging.getLogger(__name__)

METRICS_HEADER = ("epoch", "stage", "train_loss", "test_acc", "label_wave", "auc_we", "auc_loss")
WEIGHTS_HEADER = ("idx", "class", "w_norm", "tau1", "eps", "tau2", "is_noisy")
BANK_HEADER = ("class", "m1", "alpha1", "beta1", "alpha2", "beta2", "fallback_used")

# (row name, loss terms, eps mode, constant weights or None)
ABLATION_CELLS = (
    ("L_C", ("C",), "dynamic", (1.0, 0.0, 0.0)),
    ("L_C+L_N", ("C", "N"), "dynamic", None),
    ("L_C+L_SIM", ("C", "SIM"), "dynamic", None),
    ("full", ("C", "N", "SIM"), "dynamic", None),
    ("full eps=0.25", ("C", "N", "SIM"), 0.25, None),
    ("full eps=0.5", ("C", "N", "SIM"), 0.5, None),
    ("full eps=1", ("C", "N", "SIM"), 1.0, None),
)


def _f(v):
    if v is None:
        return ""
    return format(float(v), ".17g")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def prepare_dir(out_dir, force=False) -> Path:
    """Create ``out_dir``; refuse a non-empty one unless ``force``."""
    out = Path(out_dir)
    if out.exists() and not out.is_dir():
        raise OutputExistsError(f"{out} exists and is not a directory")
    if out.exists() and any(out.iterdir()) and not force:
        raise OutputExistsError(f"{out} is not empty; pass force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return out


def load_data(cfg):
    """(train, test) datasets from the dataset and noise sections.

    Generated data gets the configured label noise; CSV data is used as given.
    """
    ds, seed = cfg["dataset"], cfg["seed"]
    if ds["source"] == "csv":
        train = load_csv(ds["train_path"], ds["n_classes"])
        test = load_csv(ds["test_path"], ds["n_classes"])
        return train, test
    K, d = ds["n_classes"], ds["dim"]
    train = make_gaussian_clusters(K, ds["n_per_class"], d, ds["sep"], ds["spread"],
                                   derive_seed(seed, "datagen", "train"))
    test = make_gaussian_clusters(K, ds["test_per_class"], d, ds["sep"], ds["spread"],
                                  derive_seed(seed, "datagen", "test"))
    nz = cfg["noise"]
    nseed = nz["seed"] if nz["seed"] is not None else derive_seed(seed, "noise")
    if nz["kind"] == "sym":
        train = apply_transition(train, symmetric_noise_matrix(K, nz["eta"]), nseed)
    elif nz["kind"] == "asym":
        train = apply_transition(train, asymmetric_noise_matrix(K, nz["eta"]), nseed)
    elif nz["kind"] == "inst":
        train = instance_noise(train, nz["eta"], nseed)
    return train, test


def write_datasets(cfg, out_dir, force=False):
    out = prepare_dir(out_dir, force)
    train, test = load_data(cfg)
    save_csv(train, out / "train.csv")
    save_csv(test, out / "test.csv")
    return out / "train.csv", out / "test.csv"


def write_metrics_csv(path, metrics):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for m in metrics:
            w.writerow([m.epoch, m.stage, _f(m.train_loss), _f(m.test_acc),
                        "" if m.label_wave is None else m.label_wave, _f(m.auc_we), _f(m.auc_loss)])


def write_weights_csv(path, weights, train):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WEIGHTS_HEADER)
        for i in range(len(weights)):
            noisy = int(train.noise_mask[i]) if train.has_oracle else ""
            w.writerow([i, int(train.given_labels[i]), _f(weights.w_norm[i]), _f(weights.tau1[i]),
                        _f(weights.eps[i]), _f(weights.tau2[i]), noisy])


def write_bank_csv(path, bank):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BANK_HEADER)
        for c, m1, a1, b1, a2, b2, fb in bank.rows():
            w.writerow([c, _f(m1), _f(a1), _f(b1), _f(a2), _f(b2), fb])


def write_summary(out, summary, artifacts):
    summary = dict(summary)
    summary["digests"] = {name: sha256_file(out / name) for name in sorted(artifacts)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


@dataclass
class RunResult:
    out_dir: Path
    report: object
    ledger: object
    summary: dict
    train: object
    test: object


def run_experiment(cfg, out_dir=None, force=False, stage1_only=False) -> RunResult:
    """Two-stage training persisted into a run directory."""
    out = prepare_dir(out_dir or cfg["output"]["run_dir"], force)
    train, test = load_data(cfg)
    tc = train_config(cfg)
    if stage1_only:
        tc = dataclasses.replace(tc, stage2_epochs=0)
    (out / "config.json").write_text(dump_config(cfg))

    model, ledger, report = run_two_stage(tc, train, test)
    artifacts = ["config.json", "metrics.csv", "base.ckpt", "final.ckpt"]
    write_metrics_csv(out / "metrics.csv", report.metrics)
    save_checkpoint(report.base_model, out / "base.ckpt")
    save_checkpoint(model, out / "final.ckpt")
    report.checkpoint_paths = {"base": out / "base.ckpt", "final": out / "final.ckpt"}

    s1 = report.stage_metrics(1)
    summary = {
        "seed": cfg["seed"],
        "n_train": len(train),
        "n_test": len(test),
        "train_noise_rate": train.noise_rate if train.has_oracle else None,
        "base_epoch": report.base_epoch,
        "stage1_final_test_acc": s1[-1].test_acc,
        "final_test_acc": report.final_test_acc,
        "notes": list(report.notes),
    }
    if report.stage_metrics(2):
        write_weights_csv(out / "weights_final.csv", report.weights, train)
        write_bank_csv(out / "bank_final.csv", report.bank)
        artifacts += ["weights_final.csv", "bank_final.csv"]
        checks = report.coefficient_checks
        stage2_info = {
            "epochs": len(report.stage_metrics(2)),
            "final_test_acc": report.final_test_acc,
            "max_tau_sum_error": max(c.max_sum_error for c in checks),
            "eps_min": min(c.eps_min for c in checks),
            "eps_max": max(c.eps_max for c in checks),
        }
        if train.has_oracle and 0 < train.noise_mask.sum() < len(train):
            stage2_info["selection"] = [
                dict(zip(("threshold", "precision", "recall", "f_score"),
                         (t, *prf_at_threshold(report.weights.tau1, train.noise_mask, t))))
                for t in cfg["eval"]["thresholds"]
            ]
        summary["stage2"] = stage2_info
    summary = write_summary(out, summary, artifacts)
    return RunResult(out, report, ledger, summary, train, test)


def compare_table(cfg):
    """Plain cross-entropy over the full epoch budget with metric AUCs at each probe epoch.

    Returns (table, report, ledger) where table maps epoch -> {metric: AUC or None}.
    """
    train, test = load_data(cfg)
    if not train.has_oracle:
        raise WrongEventError("metric comparison needs a dataset with true labels")
    tc = train_config(cfg)
    total = tc.stage1_epochs + tc.stage2_epochs
    tc = dataclasses.replace(tc, probe_epochs=tuple(e for e in tc.probe_epochs if e <= total))
    _, ledger, report = train_ce_baseline(tc, train, test, total)
    return compare_metrics(report.snapshots, train.noise_mask), report, ledger


def run_compare(cfg, out_dir=None, force=False):
    out = prepare_dir(out_dir or cfg["output"]["run_dir"], force)
    (out / "config.json").write_text(dump_config(cfg))
    table, report, _ = compare_table(cfg)
    rows = [[e, *(table[e][m] for m in METRICS)] for e in sorted(table)]
    write_table_csv(out / "compare.csv", ("epoch", *METRICS), rows,
                    "oracle AUC (noisy = positive) per metric per probe epoch; '-' = all values identical")
    write_metrics_csv(out / "metrics.csv", report.metrics)
    summary = write_summary(out, {"seed": cfg["seed"], "probe_epochs": sorted(table)},
                            ["config.json", "compare.csv", "metrics.csv"])
    return table, summary


def ablate(cfg, cells=ABLATION_CELLS):
    """Final test accuracy for each loss/eps cell, all sharing one stage-1 run.

    Returns a list of dicts with keys name, terms, eps_mode, test_acc, status.
    """
    train, test = load_data(cfg)
    tc = train_config(cfg)
    base, ledger, report = stage1(tc, train, test)
    rows = []
    for name, terms, eps_mode, fixed in cells:
        cell = dataclasses.replace(tc, terms=frozenset(terms), eps_mode=eps_mode, frozen_weights=fixed)
        try:
            _, rep = stage2(cell, train, test, base, ledger.copy())
            acc, status = rep.final_test_acc if rep.metrics else report.final_test_acc, "ok"
        except WrongEventError as exc:
            log.warning("ablation cell %s failed: %s", name, exc)
            acc, status = None, f"failed: {exc}"
        rows.append({"name": name, "terms": "+".join(terms), "eps_mode": eps_mode,
                     "test_acc": acc, "status": status})
    return rows


def run_ablate(cfg, out_dir=None, force=False):
    out = prepare_dir(out_dir or cfg["output"]["run_dir"], force)
    (out / "config.json").write_text(dump_config(cfg))
    rows = ablate(cfg)
    write_table_csv(out / "ablate.csv", ("cell", "terms", "eps_mode", "test_acc", "status"),
                    [[r["name"], r["terms"], r["eps_mode"], r["test_acc"], r["status"]] for r in rows],
                    "final test accuracy per loss-term / eps cell; stage 1 shared across cells")
    summary = write_summary(out, {"seed": cfg["seed"], "cells": len(rows)}, ["config.json", "ablate.csv"])
    return rows, summary


def render_report(run_dir) -> str:
    """Human-readable digest of a finished run directory; flags artifacts whose digest no longer matches."""
    out = Path(run_dir)
    summary = json.loads((out / "summary.json").read_text())
    lines = [f"run directory: {out}", f"seed: {summary.get('seed')}"]
    for key in ("base_epoch", "stage1_final_test_acc", "final_test_acc", "train_noise_rate"):
        if key in summary:
            lines.append(f"{key}: {summary[key]}")
    s2 = summary.get("stage2")
    if s2:
        lines.append(f"stage 2: {s2['epochs']} epochs, final test acc {s2['final_test_acc']:.4f}")
        lines.append(f"  max |tau1+tau2-1| = {s2['max_tau_sum_error']:.3g}, "
                     f"eps in [{s2['eps_min']:.4f}, {s2['eps_max']:.4f}]")
        for row in s2.get("selection", []):
            lines.append(f"  tau1 >= {row['threshold']}: P={row['precision']:.4f} R={row['recall']:.4f} "
                         f"F={row['f_score']:.4f}")
    elif "base_epoch" in summary:
        lines.append("stage 2: not run")
    for note in summary.get("notes", []):
        lines.append(f"note: {note}")
    bad = [name for name, digest in summary.get("digests", {}).items()
           if not (out / name).exists() or sha256_file(out / name) != digest]
    lines.append("digests: " + ("all match" if not bad else "MISMATCH in " + ", ".join(bad)))
    return "\n".join(lines) + "\n"

