"""Pipeline configuration: one JSON document drives every subcommand.

Unknown keys are rejected (misspelled knobs must not silently fall back to
defaults) and errors carry the line of the offending key in the original
file. Every run echoes the fully-defaulted document to
``resolved_config.json`` so any artifact can be reproduced from that file
alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .augment import parse_corruption
from .probe import TrainConfig
from .toyworld import ToyDatasetSpec, ToyEncoderSpec

DEFAULT_SEEDS = (42, 36, 12)

_DEFAULTS: dict[str, Any] = {
    "dataset": {
        "kind": "toy",
        "classes": 10,
        "per_class": 200,
        "img_size": 64,
        "jitter": 0.3,
        "noise_sigma": 0.05,
        "seed": 7,
        # stores mode
        "train_group": None,
        "test_store": None,
    },
    "encoder": {
        "kind": "toy",
        "dim": 64,
        "patch": 8,
        "seed": 11,
    },
    "prompts": {
        "count": 4,
        "mode": "single",
        "prompt_index": 0,
        "anchor_samples": 1,
    },
    "train": {
        "lr0": 0.4,
        "momentum": 0.9,
        "weight_decay": 0.0,
        "total_steps": 15000,
        "batch_size": 64,
        "clip_norm": 1.0,
        "temperature": 0.01,
        "strong_views": 4,
        "strong_view_policy": "uniform_random",
    },
    "eval": {
        "num_bins": 15,
        "corruptions": [],
        "ood_kind": "toy",
        "ood_seed_offset": 9999,
        "ood_store": None,
        "corrupt_stores": {},
    },
    "out_dir": "runs/toy",
}


class ConfigError(ValueError):
    """Invalid pipeline configuration; message carries file:line anchors."""


def _line_of(text: str, key: str) -> int:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return i
    return 1


@dataclass
class PipelineConfig:
    doc: dict[str, Any]
    source_path: str = "<config>"
    source_text: str = ""

    def __getitem__(self, key: str) -> Any:
        return self.doc[key]

    def fail(self, dotted: str, message: str) -> None:
        key = dotted.split(".")[-1]
        line = _line_of(self.source_text, key)
        raise ConfigError(f"{self.source_path}:{line}: {dotted} {message}")

    # section builders -----------------------------------------------------

    def dataset_spec(self) -> ToyDatasetSpec:
        d = self.doc["dataset"]
        return ToyDatasetSpec(
            n_classes=d["classes"],
            n_per_class=d["per_class"],
            img_size=d["img_size"],
            jitter=d["jitter"],
            noise_sigma=d["noise_sigma"],
            seed=d["seed"],
        )

    def encoder_spec(self) -> ToyEncoderSpec:
        e = self.doc["encoder"]
        return ToyEncoderSpec(dim=e["dim"], patch=e["patch"], seed=e["seed"])

    def train_config(self, seed: int, strong_view_policy: str | None = None) -> TrainConfig:
        t = self.doc["train"]
        return TrainConfig(
            lr0=t["lr0"],
            momentum=t["momentum"],
            weight_decay=t["weight_decay"],
            total_steps=t["total_steps"],
            batch_size=t["batch_size"],
            clip_norm=t["clip_norm"],
            temperature=t["temperature"],
            seed=seed,
            strong_view_policy=strong_view_policy or t["strong_view_policy"],
        )

    def resolved_json(self) -> str:
        return json.dumps(self.doc, indent=2, sort_keys=True) + "\n"

    def write_resolved(self, out_dir: Path) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "resolved_config.json").write_text(self.resolved_json())


def _merge(defaults: dict, user: dict, path: str, cfg: PipelineConfig) -> dict:
    out = dict(defaults)
    for key, value in user.items():
        if key not in defaults:
            cfg.fail(f"{path}{key}", "is not a recognized key")
        if isinstance(defaults[key], dict) and not isinstance(value, dict):
            cfg.fail(f"{path}{key}", "must be an object")
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], value, f"{path}{key}.", cfg)
        else:
            out[key] = value
    return out


def _validate(cfg: PipelineConfig) -> None:
    doc = cfg.doc

    d = doc["dataset"]
    if d["kind"] not in ("toy", "stores"):
        cfg.fail("dataset.kind", 'must be "toy" or "stores"')
    if d["kind"] == "toy":
        if d["classes"] < 2:
            cfg.fail("dataset.classes", "must be >= 2")
        if d["per_class"] < 1:
            cfg.fail("dataset.per_class", "must be >= 1")
        if d["img_size"] < 8:
            cfg.fail("dataset.img_size", "must be >= 8")
        if not 0 <= d["jitter"] <= 1:
            cfg.fail("dataset.jitter", "must be in [0, 1]")
        if d["noise_sigma"] < 0:
            cfg.fail("dataset.noise_sigma", "must be non-negative")
    else:
        if not d["train_group"]:
            cfg.fail("dataset.train_group", "is required for stores datasets")
        if not d["test_store"]:
            cfg.fail("dataset.test_store", "is required for stores datasets")

    e = doc["encoder"]
    if e["kind"] not in ("toy", "external"):
        cfg.fail("encoder.kind", 'must be "toy" or "external"')
    if e["kind"] == "toy":
        if e["dim"] < 8:
            cfg.fail("encoder.dim", "must be >= 8")
        if e["patch"] < 1:
            cfg.fail("encoder.patch", "must be >= 1")
        if d["kind"] == "toy" and d["img_size"] % e["patch"]:
            cfg.fail("encoder.patch", "must divide dataset.img_size")
    if d["kind"] == "toy" and e["kind"] != "toy":
        cfg.fail("encoder.kind", 'must be "toy" when dataset.kind is "toy"')

    p = doc["prompts"]
    if p["count"] < 1:
        cfg.fail("prompts.count", "must be >= 1")
    if p["mode"] not in ("single", "mean"):
        cfg.fail("prompts.mode", 'must be "single" or "mean"')
    if not 0 <= p["prompt_index"] < p["count"]:
        cfg.fail("prompts.prompt_index", "must be in [0, count)")
    if p["anchor_samples"] < 1:
        cfg.fail("prompts.anchor_samples", "must be >= 1")

    t = doc["train"]
    if t["lr0"] <= 0:
        cfg.fail("train.lr0", "must be positive")
    if not 0 <= t["momentum"] < 1:
        cfg.fail("train.momentum", "must be in [0, 1)")
    if t["weight_decay"] < 0:
        cfg.fail("train.weight_decay", "must be non-negative")
    if t["total_steps"] < 1:
        cfg.fail("train.total_steps", "must be >= 1")
    if t["batch_size"] < 1:
        cfg.fail("train.batch_size", "must be >= 1")
    if t["clip_norm"] <= 0:
        cfg.fail("train.clip_norm", "must be positive")
    if t["temperature"] <= 0:
        cfg.fail("train.temperature", "must be positive")
    if t["strong_views"] < 0:
        cfg.fail("train.strong_views", "must be >= 0")
    if t["strong_view_policy"] not in ("cycle", "uniform_random"):
        cfg.fail("train.strong_view_policy", 'must be "cycle" or "uniform_random"')

    v = doc["eval"]
    if v["num_bins"] < 1:
        cfg.fail("eval.num_bins", "must be >= 1")
    for c in v["corruptions"]:
        try:
            parse_corruption(c)
        except ValueError as exc:
            cfg.fail("eval.corruptions", str(exc))
    if v["ood_kind"] not in ("toy", "store", "none"):
        cfg.fail("eval.ood_kind", 'must be "toy", "store" or "none"')
    if v["ood_kind"] == "store" and not v["ood_store"]:
        cfg.fail("eval.ood_store", 'is required when eval.ood_kind is "store"')

    if not isinstance(doc["out_dir"], str) or not doc["out_dir"]:
        cfg.fail("out_dir", "must be a non-empty path")


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such config file")
    text = path.read_text()
    try:
        user = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(user, dict):
        raise ConfigError(f"{path}:1: config must be a JSON object")

    cfg = PipelineConfig(doc={}, source_path=str(path), source_text=text)
    cfg.doc = _merge(_DEFAULTS, user, "", cfg)
    _validate(cfg)
    return cfg


def config_from_doc(doc: dict[str, Any], name: str = "<dict>") -> PipelineConfig:
    cfg = PipelineConfig(doc={}, source_path=name, source_text=json.dumps(doc, indent=2))
    cfg.doc = _merge(_DEFAULTS, doc, "", cfg)
    _validate(cfg)
    return cfg


__all__ = ["ConfigError", "DEFAULT_SEEDS", "PipelineConfig", "config_from_doc", "load_config"]
