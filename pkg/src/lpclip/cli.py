"""Operator surface: subcommands chaining the engine into full experiments.

    lpclip synth          --config cfg.json        # toy data -> stores
    lpclip zeroshot       --config cfg.json        # teacher eval
    lpclip prompt-select  --config cfg.json        # per-prompt accuracy table
    lpclip train          --config cfg.json [--seeds 42,36,12]
                          [--no-weighting] [--no-strong-aug] [--views K]
    lpclip eval           --config cfg.json [--corrupt kind:sev,...]
    lpclip ood            --config cfg.json
    lpclip plot           --config cfg.json
    lpclip validate <view-group directory>

Artifacts land under out_dir: shared stores in data/, teacher results in
teacher/, one subdirectory per training seed, and mean/std rows across
seeds in summary.csv. Every subcommand echoes resolved_config.json so a run
is reproducible from that file alone.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import metrics, plots, toyworld
from .augment import CORRUPTIONS, parse_corruption
from .config import DEFAULT_SEEDS, ConfigError, PipelineConfig, load_config
from .probe import load_probe, predict_probe, save_probe, train_probe
from .tensorio import (
    Manifest,
    StoreError,
    ViewGroup,
    read_store,
    read_view_group,
    validate_view_group,
    write_store,
    write_view_group,
)
from .zeroshot import (
    PromptBank,
    compute_logits,
    ensemble_class_embeddings,
    select_best_prompt,
    teacher_predict,
)


class CliError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# shared loading helpers

def _out_dir(cfg: PipelineConfig, override: str | None) -> Path:
    out = Path(override) if override else Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    cfg.doc["out_dir"] = str(out)
    cfg.write_resolved(out)
    return out


def _data_dir(out: Path) -> Path:
    return out / "data"


def _seed_group_dir(out: Path, seed: int) -> Path:
    return _data_dir(out) / f"seed_{seed}" / "group"


def _load_test(cfg: PipelineConfig, out: Path) -> tuple[np.ndarray, np.ndarray, Manifest]:
    if cfg["dataset"]["kind"] == "toy":
        path = _data_dir(out) / "test.lpce"
    else:
        path = Path(cfg["dataset"]["test_store"])
    if not path.exists():
        raise CliError(f"missing test store {path} (run `lpclip synth` first?)")
    embs, manifest = read_store(path)
    if manifest.labels is None:
        raise CliError(f"test store {path} has no labels in its manifest")
    return embs.astype(np.float64), np.asarray(manifest.labels), manifest


def _load_bank(cfg: PipelineConfig, out: Path) -> PromptBank:
    if cfg["dataset"]["kind"] == "toy":
        path = _data_dir(out) / "prompts.lpce"
    else:
        path = Path(cfg["dataset"]["train_group"]).parent / "prompts.lpce"
    if not path.exists():
        raise CliError(f"missing prompt bank {path} (run `lpclip synth` first?)")
    flat, manifest = read_store(path)
    if not manifest.prompt_count:
        raise CliError(f"{path} has no prompt_count in its manifest")
    p = int(manifest.prompt_count)
    c = flat.shape[0] // p
    return PromptBank(embeddings=flat.astype(np.float64).reshape(c, p, flat.shape[1]))


def _anchors(cfg: PipelineConfig, bank: PromptBank):
    p = cfg["prompts"]
    return ensemble_class_embeddings(bank, p["mode"], prompt_index=p["prompt_index"])


def _load_group(cfg: PipelineConfig, out: Path, seed: int) -> ViewGroup:
    if cfg["dataset"]["kind"] == "toy":
        path = _seed_group_dir(out, seed)
    else:
        path = Path(cfg["dataset"]["train_group"])
    if not (path / "weak.lpce").exists():
        raise CliError(f"missing view group {path} (run `lpclip synth` first?)")
    return read_view_group(path)


def _corruption_seed(cfg: PipelineConfig, kind: str, severity: int) -> int:
    kinds = list(CORRUPTIONS)
    return cfg["dataset"]["seed"] * 1000 + kinds.index(kind) * 10 + severity


def _corrupted_test_embs(
    cfg: PipelineConfig, kind: str, severity: int
) -> np.ndarray:
    """Toy mode: regenerate the test images deterministically and corrupt
    them before encoding; stores mode: read the pre-exported store."""
    if cfg["dataset"]["kind"] == "toy":
        spec = cfg.dataset_spec()
        enc = cfg.encoder_spec()
        test_imgs, _ = toyworld.gen_dataset(spec, "test")
        return toyworld.encode_corrupted(
            test_imgs, enc, kind, severity, seed=_corruption_seed(cfg, kind, severity)
        )
    key = f"{kind}:{severity}"
    stores = cfg["eval"]["corrupt_stores"]
    if key not in stores:
        raise CliError(
            f"stores dataset needs eval.corrupt_stores[{key!r}] to evaluate corruption"
        )
    return read_store(stores[key])[0].astype(np.float64)


def _seed_list(args: argparse.Namespace) -> list[int]:
    if getattr(args, "seed", None) is not None:
        return [args.seed]
    raw = getattr(args, "seeds", None) or ",".join(str(s) for s in DEFAULT_SEEDS)
    try:
        return [int(s) for s in raw.split(",") if s]
    except ValueError as exc:
        raise CliError(f"bad --seeds value {raw!r}") from exc


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(cfg: PipelineConfig, args: argparse.Namespace) -> None:
    if cfg["dataset"]["kind"] != "toy":
        raise CliError("synth only applies to toy datasets (stores come from the bridge)")
    out = _out_dir(cfg, args.out)
    data = _data_dir(out)
    data.mkdir(parents=True, exist_ok=True)
    spec = cfg.dataset_spec()
    enc = cfg.encoder_spec()
    seeds = _seed_list(args)
    n_views = args.views if args.views is not None else cfg["train"]["strong_views"]

    train_imgs, train_labels = toyworld.gen_dataset(spec, "train")
    test_imgs, test_labels = toyworld.gen_dataset(spec, "test")
    class_names = [f"class_{c}" for c in range(spec.n_classes)]

    weak_train = toyworld.encode_weak(train_imgs, enc)
    weak_test = toyworld.encode_weak(test_imgs, enc)
    write_store(
        weak_test,
        Manifest(class_names=class_names, labels=[int(x) for x in test_labels],
                 source="toyworld test split"),
        data / "test.lpce",
    )

    bank = toyworld.build_class_prompt_bank(
        spec, enc, cfg["prompts"]["count"], cfg["prompts"]["anchor_samples"]
    )
    c, p, d = bank.embeddings.shape
    write_store(
        bank.embeddings.reshape(c * p, d),
        Manifest(class_names=class_names, prompt_count=p, source="toyworld prompt bank"),
        data / "prompts.lpce",
    )

    for seed in seeds:
        strong = toyworld.encode_strong_views(train_imgs, enc, n_views, seed)
        write_view_group(
            weak_train,
            strong,
            Manifest(class_names=class_names, labels=[int(x) for x in train_labels],
                     view_group=f"seed_{seed}", source="toyworld train split"),
            _seed_group_dir(out, seed),
        )
    print(f"synth: wrote test/prompt stores and {len(seeds)} view group(s) under {data}")


def _teacher_eval(cfg: PipelineConfig, out: Path):
    test_embs, test_labels, _ = _load_test(cfg, out)
    bank = _load_bank(cfg, out)
    anchors = _anchors(cfg, bank)
    teacher = teacher_predict(
        compute_logits(test_embs, anchors), cfg["train"]["temperature"]
    )
    correct = teacher.pseudo_label == test_labels
    report = metrics.calibration_report(
        teacher.confidence, correct, num_bins=cfg["eval"]["num_bins"]
    )
    return teacher, test_labels, report, anchors


def cmd_zeroshot(cfg: PipelineConfig, args: argparse.Namespace) -> None:
    out = _out_dir(cfg, args.out)
    teacher, labels, report, anchors = _teacher_eval(cfg, out)
    tdir = out / "teacher"
    tdir.mkdir(exist_ok=True)
    acc = metrics.accuracy(teacher.pseudo_label, labels)
    (tdir / "metrics.json").write_text(json.dumps({
        "accuracy": acc,
        "ece": report.ece,
        "n_samples": report.n_samples,
        "temperature": teacher.temperature,
        "mean_confidence": float(teacher.confidence.mean()),
    }, indent=2) + "\n")
    report.write_csv(tdir / "calibration.csv")
    (tdir / "report.json").write_text(report.to_json())

    rows = []
    for corrupt_spec in (args.corrupt.split(",") if args.corrupt else cfg["eval"]["corruptions"]):
        kind, severity = parse_corruption(corrupt_spec)
        embs = _corrupted_test_embs(cfg, kind, severity)
        t = teacher_predict(compute_logits(embs, anchors), cfg["train"]["temperature"])
        c_rep = metrics.calibration_report(
            t.confidence, t.pseudo_label == labels, num_bins=cfg["eval"]["num_bins"]
        )
        rows.append([f"{kind}:{severity}",
                     _fmt(metrics.accuracy(t.pseudo_label, labels)), _fmt(c_rep.ece)])
    if rows:
        _write_csv(tdir / "corruption.csv", ["condition", "accuracy", "ece"], rows)
    print(f"zeroshot: accuracy {acc:.4f} ece {report.ece:.4f} -> {tdir}")


def cmd_prompt_select(cfg: PipelineConfig, args: argparse.Namespace) -> None:
    out = _out_dir(cfg, args.out)
    test_embs, test_labels, _ = _load_test(cfg, out)
    bank = _load_bank(cfg, out)
    best, table = select_best_prompt(
        bank, test_embs, test_labels, cfg["train"]["temperature"]
    )
    pdir = out / "prompt_select"
    pdir.mkdir(exist_ok=True)
    _write_csv(
        pdir / "prompt_accuracy.csv",
        ["prompt_index", "accuracy"],
        [[i, _fmt(a)] for i, a in enumerate(table)],
    )
    (pdir / "best_prompt.json").write_text(
        json.dumps({"best_prompt": best, "accuracy": float(table[best])}, indent=2) + "\n"
    )
    print(f"prompt-select: best prompt {best} (accuracy {table[best]:.4f}) -> {pdir}")


def cmd_train(cfg: PipelineConfig, args: argparse.Namespace) -> None:
    out = _out_dir(cfg, args.out)
    bank = _load_bank(cfg, out)
    anchors = _anchors(cfg, bank)
    for seed in _seed_list(args):
        group = _load_group(cfg, out, seed)
        if args.no_strong_aug:
            group = ViewGroup(weak=group.weak, strong=[], manifest=group.manifest)
        elif args.views is not None:
            if args.views > group.n_views:
                raise CliError(
                    f"--views {args.views} exceeds the {group.n_views} stored views"
                )
            group = ViewGroup(
                weak=group.weak, strong=group.strong[: args.views], manifest=group.manifest
            )
        tc = cfg.train_config(seed)
        params, history = train_probe(
            group, anchors, tc, unit_weights=args.no_weighting
        )
        sdir = out / f"seed_{seed}"
        sdir.mkdir(exist_ok=True)
        save_probe(params, sdir / "probe.lpce", source=f"train seed {seed}")
        history.write_csv(sdir / "history.csv")
        (sdir / "train_config.json").write_text(tc.to_json())
        print(
            f"train: seed {seed} K={group.n_views} final loss "
            f"{history.losses[-1]:.6f} -> {sdir}"
        )


def cmd_eval(cfg: PipelineConfig, args: argparse.Namespace) -> None:
    out = _out_dir(cfg, args.out)
    test_embs, test_labels, _ = _load_test(cfg, out)
    bank = _load_bank(cfg, out)
    anchors = _anchors(cfg, bank)
    num_bins = cfg["eval"]["num_bins"]
    conditions = ["clean"] + (
        args.corrupt.split(",") if args.corrupt else list(cfg["eval"]["corruptions"])
    )

    cond_embs = {"clean": test_embs}
    for cond in conditions[1:]:
        kind, severity = parse_corruption(cond)
        cond_embs[cond] = _corrupted_test_embs(cfg, kind, severity)

    teacher_rows = []
    for cond in conditions:
        t = teacher_predict(compute_logits(cond_embs[cond], anchors),
                            cfg["train"]["temperature"])
        rep = metrics.calibration_report(
            t.confidence, t.pseudo_label == test_labels, num_bins=num_bins
        )
        teacher_rows.append(
            [cond, _fmt(metrics.accuracy(t.pseudo_label, test_labels)), _fmt(rep.ece)]
        )

    seeds = _seed_list(args)
    per_seed: dict[str, dict[str, list[float]]] = {
        cond: {"accuracy": [], "ece": []} for cond in conditions
    }
    for seed in seeds:
        sdir = out / f"seed_{seed}"
        probe_path = sdir / "probe.lpce"
        if not probe_path.exists():
            raise CliError(f"missing probe checkpoint {probe_path} (run `lpclip train`)")
        params = load_probe(probe_path)
        edir = sdir / "eval"
        edir.mkdir(exist_ok=True)
        rows = []
        for cond in conditions:
            labels, _probs, conf = predict_probe(params, cond_embs[cond])
            correct = labels == test_labels
            rep = metrics.calibration_report(conf, correct, num_bins=num_bins)
            acc = metrics.accuracy(labels, test_labels)
            rows.append([cond, _fmt(acc), _fmt(rep.ece)])
            per_seed[cond]["accuracy"].append(acc)
            per_seed[cond]["ece"].append(rep.ece)
            if cond == "clean":
                rep.write_csv(edir / "calibration.csv")
                (edir / "report.json").write_text(rep.to_json())
        _write_csv(edir / "metrics.csv", ["condition", "accuracy", "ece"], rows)
        print(f"eval: seed {seed} " + " ".join(f"{r[0]}={float(r[1]):.4f}" for r in rows))

    summary = [["teacher", cond, acc, ece, _fmt(0.0)] for cond, acc, ece in teacher_rows]
    for cond in conditions:
        accs = np.array(per_seed[cond]["accuracy"])
        eces = np.array(per_seed[cond]["ece"])
        summary.append(
            ["student_mean", cond, _fmt(accs.mean()), _fmt(eces.mean()), _fmt(accs.std())]
        )
    _write_csv(
        out / "summary.csv",
        ["model", "condition", "accuracy", "ece", "accuracy_std"],
        summary,
    )


def _ood_embs(cfg: PipelineConfig) -> np.ndarray:
    ev = cfg["eval"]
    if ev["ood_kind"] == "store":
        return read_store(ev["ood_store"])[0].astype(np.float64)
    if ev["ood_kind"] == "toy":
        if cfg["dataset"]["kind"] != "toy":
            raise CliError('eval.ood_kind "toy" needs a toy dataset')
        spec = dataclasses.replace(
            cfg.dataset_spec(), seed=cfg["dataset"]["seed"] + ev["ood_seed_offset"]
        )
        imgs, _ = toyworld.gen_dataset(spec, "test")
        return toyworld.encode_weak(imgs, cfg.encoder_spec())
    raise CliError("eval.ood_kind is none; nothing to do")


def cmd_ood(cfg: PipelineConfig, args: argparse.Namespace) -> None:
    out = _out_dir(cfg, args.out)
    test_embs, test_labels, _ = _load_test(cfg, out)
    bank = _load_bank(cfg, out)
    anchors = _anchors(cfg, bank)
    ood_embs = _ood_embs(cfg)

    teacher_id = teacher_predict(compute_logits(test_embs, anchors),
                                 cfg["train"]["temperature"])
    teacher_ood = teacher_predict(compute_logits(ood_embs, anchors),
                                  cfg["train"]["temperature"])
    teacher_rep = metrics.ood_report(teacher_id.confidence, teacher_ood.confidence)

    rows = [["teacher", _fmt(teacher_rep.auroc), _fmt(teacher_rep.aupr),
             _fmt(teacher_rep.fpr95)]]
    for seed in _seed_list(args):
        sdir = out / f"seed_{seed}"
        probe_path = sdir / "probe.lpce"
        if not probe_path.exists():
            raise CliError(f"missing probe checkpoint {probe_path} (run `lpclip train`)")
        params = load_probe(probe_path)
        _l, _p, id_conf = predict_probe(params, test_embs)
        _l, _p, ood_conf = predict_probe(params, ood_embs)
        rep = metrics.ood_report(id_conf, ood_conf)
        odir = sdir / "ood"
        odir.mkdir(exist_ok=True)
        (odir / "ood.json").write_text(rep.to_json())
        _write_csv(odir / "roc.csv", ["fpr", "tpr"],
                   [[_fmt(a), _fmt(b)] for a, b in rep.roc_points])
        _write_csv(odir / "pr.csv", ["recall", "precision"],
                   [[_fmt(a), _fmt(b)] for a, b in rep.pr_points])
        rows.append([f"student_seed_{seed}", _fmt(rep.auroc), _fmt(rep.aupr),
                     _fmt(rep.fpr95)])
        print(f"ood: seed {seed} auroc {rep.auroc:.4f} aupr {rep.aupr:.4f} "
              f"fpr95 {rep.fpr95:.4f}")
    _write_csv(out / "ood_summary.csv", ["model", "auroc", "aupr", "fpr95"], rows)


def cmd_plot(cfg: PipelineConfig, args: argparse.Namespace) -> None:
    out = _out_dir(cfg, args.out)
    test_embs, test_labels, _ = _load_test(cfg, out)
    try:
        ood_embs = _ood_embs(cfg)
    except CliError:
        ood_embs = None

    for seed in _seed_list(args):
        sdir = out / f"seed_{seed}"
        probe_path = sdir / "probe.lpce"
        if not probe_path.exists():
            raise CliError(f"missing probe checkpoint {probe_path} (run `lpclip train`)")
        params = load_probe(probe_path)
        labels, _probs, conf = predict_probe(params, test_embs)
        ood_conf = None
        if ood_embs is not None:
            ood_conf = predict_probe(params, ood_embs)[2]
        rep = metrics.calibration_report(
            conf, labels == test_labels, ood_confidence=ood_conf,
            num_bins=cfg["eval"]["num_bins"],
        )
        pdir = sdir / "plots"
        pdir.mkdir(exist_ok=True)
        plots.emit_plot(rep, "reliability", pdir / "reliability.svg")
        plots.emit_plot(rep, "histogram", pdir / "histogram.svg")
        coords, ratios = metrics.pca_project(test_embs, k=2)
        plots.emit_plot((coords, test_labels, ratios), "pca", pdir / "pca.svg")
        print(f"plot: seed {seed} -> {pdir}")


def cmd_validate(args: argparse.Namespace) -> None:
    report = validate_view_group(args.directory)
    doc = {
        "valid": report.valid,
        "n_views": report.n_views,
        "n_rows": report.n_rows,
        "dim": report.dim,
        "unit_norm_flags": report.unit_norm_flags,
        "problems": report.problems,
    }
    print(json.dumps(doc, indent=2))
    if not report.valid:
        raise CliError("view group invalid: " + "; ".join(report.problems))


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lpclip",
        description="distill a zero-shot teacher into a linear probe and evaluate it",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, train_flags: bool = False) -> None:
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--out", default=None, help="override out_dir")
        p.add_argument("--seed", type=int, default=None, help="single training seed")
        p.add_argument("--seeds", default=None,
                       help="comma-separated training seeds (default 42,36,12)")
        if train_flags:
            p.add_argument("--no-weighting", action="store_true",
                           help="force every confidence weight to 1")
            p.add_argument("--no-strong-aug", action="store_true",
                           help="train the student on the weak view (K=0)")
            p.add_argument("--views", type=int, default=None,
                           help="use only the first K strong views")

    p = sub.add_parser("synth", help="generate toy stores")
    common(p)
    p.add_argument("--views", type=int, default=None, help="strong views to write")

    common(sub.add_parser("zeroshot", help="evaluate the zero-shot teacher"))
    sub.choices["zeroshot"].add_argument("--corrupt", default=None,
                                         help="kind:severity[,...] corruption sweep")
    common(sub.add_parser("prompt-select", help="per-prompt accuracy table"))
    common(sub.add_parser("train", help="train the probe"), train_flags=True)
    common(sub.add_parser("eval", help="evaluate trained probes"))
    sub.choices["eval"].add_argument("--corrupt", default=None,
                                     help="kind:severity[,...] corruption sweep")
    common(sub.add_parser("ood", help="OOD detection metrics"))
    common(sub.add_parser("plot", help="emit SVG figures"))

    v = sub.add_parser("validate", help="validate a view-group directory")
    v.add_argument("directory")
    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "zeroshot": cmd_zeroshot,
    "prompt-select": cmd_prompt_select,
    "train": cmd_train,
    "eval": cmd_eval,
    "ood": cmd_ood,
    "plot": cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            cmd_validate(args)
        else:
            cfg = load_config(args.config)
            _COMMANDS[args.command](cfg, args)
    except (CliError, ConfigError, StoreError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
