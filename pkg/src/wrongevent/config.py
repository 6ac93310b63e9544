"""Experiment configuration: a JSON document with fixed sections.

Every key has a default, unknown keys are rejected with their full path, and the
resolved document is what gets echoed into a run directory.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .errors import ConfigError, ParameterError
from .losses import ALL_TERMS
from .net import AugmentParams
from .trainer import TrainConfig

DEFAULTS = {
    "seed": 0,
    "dataset": {
        "source": "gaussian",  # or "csv"
        "train_path": None,
        "test_path": None,
        "n_classes": 4,
        "n_per_class": 1000,
        "test_per_class": 500,
        "dim": 2,
        "sep": 6.0,
        "spread": 1.0,
    },
    "noise": {
        "kind": "sym",  # sym | asym | inst | none
        "eta": 0.4,
        "seed": None,  # None derives from the master seed
    },
    "model": {
        "hidden": [64, 64],
    },
    "train": {
        "stage1_epochs": 30,
        "stage2_epochs": 30,
        "batch_size": 64,
        "lr": 0.05,
        "momentum": 0.9,
        "weak_sigma": 0.05,
        "strong_sigma": 0.2,
        "strong_dropout": 0.1,
        "bmm_iters_warm": 2,
        "bmm_max_iters": 50,
        "bmm_tol": 1e-6,
        "fkl_k": 2,
        "ema_beta": 0.7,
        "eps_mode": "dynamic",
        "terms": ["C", "N", "SIM"],
        "detach_target": False,
    },
    "eval": {
        "probe_epochs": [1, 10, 30, 60],
        "thresholds": [0.2, 0.5, 0.8],
        "keep_history": False,  # per-epoch wrong-event and loss vectors in the ledger
    },
    "output": {
        "run_dir": "runs/default",
    },
}

NOISE_KINDS = ("sym", "asym", "inst", "none")


def _merge(base, override, path):
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"'{where}' must be a section (object)")
            out[key] = _merge(base[key], val, where)
        else:
            out[key] = val
    return out


def _need(cond, where, msg):
    if not cond:
        raise ConfigError(f"'{where}': {msg}")


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _validate(cfg):
    _need(_is_int(cfg["seed"]) and 0 <= cfg["seed"] < 2 ** 64, "seed", "must be an integer in [0, 2^64)")
    ds = cfg["dataset"]
    _need(ds["source"] in ("gaussian", "csv"), "dataset.source", "must be 'gaussian' or 'csv'")
    if ds["source"] == "csv":
        for k in ("train_path", "test_path"):
            _need(isinstance(ds[k], str) and ds[k], f"dataset.{k}", "required when source is 'csv'")
    for k, lo in (("n_classes", 2), ("n_per_class", 1), ("test_per_class", 1), ("dim", 2)):
        _need(_is_int(ds[k]) and ds[k] >= lo, f"dataset.{k}", f"must be an integer >= {lo}")
    for k in ("sep", "spread"):
        _need(_is_num(ds[k]) and ds[k] > 0, f"dataset.{k}", "must be a positive number")

    nz = cfg["noise"]
    _need(nz["kind"] in NOISE_KINDS, "noise.kind", f"must be one of {', '.join(NOISE_KINDS)}")
    _need(_is_num(nz["eta"]) and 0 <= nz["eta"] <= 1, "noise.eta", "must lie in [0, 1]")
    _need(nz["seed"] is None or (_is_int(nz["seed"]) and nz["seed"] >= 0), "noise.seed",
          "must be null or a non-negative integer")

    hidden = cfg["model"]["hidden"]
    _need(isinstance(hidden, list) and all(_is_int(h) and h >= 1 for h in hidden), "model.hidden",
          "must be a list of positive integers")

    tr = cfg["train"]
    for k in ("stage1_epochs", "batch_size", "bmm_iters_warm", "bmm_max_iters", "fkl_k"):
        _need(_is_int(tr[k]) and tr[k] >= 1, f"train.{k}", "must be an integer >= 1")
    _need(_is_int(tr["stage2_epochs"]) and tr["stage2_epochs"] >= 0, "train.stage2_epochs",
          "must be an integer >= 0")
    for k in ("lr", "momentum", "weak_sigma", "strong_sigma", "strong_dropout", "bmm_tol", "ema_beta"):
        _need(_is_num(tr[k]), f"train.{k}", "must be a number")
    eps = tr["eps_mode"]
    _need(eps == "dynamic" or (_is_num(eps) and 0 <= eps <= 1), "train.eps_mode",
          "must be 'dynamic' or a number in [0, 1]")
    _need(isinstance(tr["terms"], list) and set(tr["terms"]) <= ALL_TERMS and tr["terms"], "train.terms",
          f"must be a non-empty subset of {sorted(ALL_TERMS)}")
    _need(isinstance(tr["detach_target"], bool), "train.detach_target", "must be true or false")

    ev = cfg["eval"]
    _need(isinstance(ev["probe_epochs"], list) and all(_is_int(e) and e >= 1 for e in ev["probe_epochs"]),
          "eval.probe_epochs", "must be a list of positive integers")
    _need(isinstance(ev["thresholds"], list) and all(_is_num(t) and 0 < t < 1 for t in ev["thresholds"]),
          "eval.thresholds", "must be a list of numbers in (0, 1)")
    _need(isinstance(ev["keep_history"], bool), "eval.keep_history", "must be true or false")
    _need(isinstance(cfg["output"]["run_dir"], str) and cfg["output"]["run_dir"], "output.run_dir",
          "must be a non-empty path")


def resolve_config(overrides=None, seed=None):
    """Defaults merged with ``overrides``; ``seed`` (if given) replaces the master seed."""
    if overrides is not None and not isinstance(overrides, dict):
        raise ConfigError("config document must be an object")
    cfg = _merge(DEFAULTS, overrides or {}, "")
    if seed is not None:
        cfg["seed"] = seed
    _validate(cfg)
    # build once so range errors inside the dataclasses surface as config errors
    try:
        train_config(cfg)
    except ParameterError as exc:
        raise ConfigError(f"'train': {exc}") from None
    return cfg


def load_config(path, seed=None):
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return resolve_config(doc, seed)


def dump_config(cfg) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"


def train_config(cfg, **changes) -> TrainConfig:
    tr = cfg["train"]
    kw = dict(
        stage1_epochs=tr["stage1_epochs"],
        stage2_epochs=tr["stage2_epochs"],
        batch_size=tr["batch_size"],
        lr=float(tr["lr"]),
        momentum=float(tr["momentum"]),
        hidden=tuple(cfg["model"]["hidden"]),
        augment=AugmentParams(float(tr["weak_sigma"]), float(tr["strong_sigma"]), float(tr["strong_dropout"])),
        bmm_iters_warm=tr["bmm_iters_warm"],
        bmm_max_iters=tr["bmm_max_iters"],
        bmm_tol=float(tr["bmm_tol"]),
        fkl_k=tr["fkl_k"],
        ema_beta=float(tr["ema_beta"]),
        seed=cfg["seed"],
        eps_mode=tr["eps_mode"],
        terms=frozenset(tr["terms"]),
        detach_target=tr["detach_target"],
        probe_epochs=tuple(cfg["eval"]["probe_epochs"]),
        keep_history=cfg["eval"]["keep_history"],
    )
    kw.update(changes)
    return TrainConfig(**kw)
