"""``senres`` command line: ingest, augment, pretrain, eval and report.

Exit codes: 0 on success, 2 for user, configuration or input errors,
3 when training produces a non-finite loss.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Any

import numpy as np

from senres import __version__
from senres.augment import AugmentSpec, apply_batch
from senres.contrastive import DESK_ENCODER, PretrainConfig, pretrain
from senres.dataset import (
    WINDOWING,
    CsvSchema,
    class_table,
    load_csv_recordings,
    load_ucihar,
    read_swnd,
    segment_all,
    synthetic_sinusoids,
    write_swnd,
)
from senres.encoder import EncoderConfig
from senres.errors import ConfigError, DivergenceError, SenresError
from senres.eval import EvalConfig, evaluate, expand_with_augmentation, render_table, stat_report
from senres.manifest import RunManifest, sha256_file
from senres.parallel import ENV_WORKERS, default_workers, parallel_map
from senres.tensor import load_params, save_params

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
SECTIONS = ("seed", "out", "dataset", "augmentation", "pretrain", "eval")
PRETRAIN_MANIFEST = "pretrain.json"
CHECKPOINT = "encoder.sprm"


class UsageError(SenresError):
    """Bad command-line usage that argparse itself cannot detect."""


# --------------------------------------------------------------------------- config


@dataclass
class RunConfig:
    """The JSON config file; every section is optional except ``seed``."""

    seed: int
    out: str | None = None
    dataset: dict[str, Any] = field(default_factory=dict)
    augmentation: dict[str, Any] = field(default_factory=dict)
    pretrain: dict[str, Any] = field(default_factory=dict)
    eval: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, source: str = "<config>") -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError(f"{source}: top level must be an object")
        unknown = set(d) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"{source}: unknown sections {sorted(unknown)}")
        if not isinstance(d.get("seed"), int):
            raise ConfigError(f"{source}: an integer 'seed' is required")
        cfg = cls(**d)
        cfg.validate(source)
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as f:
                d = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}:{e.lineno}: {e.msg}") from None
        except OSError as e:
            raise ConfigError(f"{path}: {e.strerror}") from None
        return cls.from_dict(d, os.fspath(path))

    def validate(self, source: str = "<config>") -> None:
        for key in ("path", "schema"):
            p = self.dataset.get(key)
            if isinstance(p, str) and not os.path.exists(p):
                raise ConfigError(f"{source}: dataset.{key} {p!r} does not exist")


def _load_config(args) -> RunConfig:
    if getattr(args, "config", None):
        return RunConfig.load(args.config)
    return RunConfig(seed=0)


def _pick(flag, section: dict, key: str, default=None):
    """Flag value if given, else the config value, else ``default``."""
    if flag is not None:
        return flag
    return section.get(key, default)


def _aug_arg(text: str | None):
    """``--aug`` values: short form (``resample+rotate``), inline JSON or a JSON file."""
    if text is None:
        return None
    s = text.strip()
    if s.startswith("{"):
        try:
            return json.loads(s)
        except json.JSONDecodeError as e:
            raise ConfigError(f"augmentation JSON, line {e.lineno}: {e.msg}") from None
    if s.endswith(".json"):
        try:
            with open(s) as f:
                return json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{s}:{e.lineno}: {e.msg}") from None
    return s


def _workers(args) -> int:
    return args.workers if args.workers is not None else default_workers()


def _write_manifest(m: RunManifest, path) -> None:
    m.save(path)
    print(f"manifest: {path}")


# --------------------------------------------------------------------------- ingest


def cmd_ingest(args) -> int:
    rc = _load_config(args)
    ds = rc.dataset
    kind = _pick(args.dataset, ds, "kind", "ucihar")
    src = _pick(args.inp, ds, "path")
    out = _pick(args.out, {"out": rc.out}, "out")
    if out is None:
        raise UsageError("ingest needs --out")
    t0 = time.perf_counter()
    inputs: dict[str, str] = {}
    settings: dict[str, Any] = {}
    if kind == "synthetic":
        seed = args.seed if args.seed is not None else rc.seed
        settings["per_class"] = _pick(args.per_class, ds, "per_class", 600)
        ws = synthetic_sinusoids(per_class=settings["per_class"], seed=seed)
    elif src is None:
        raise UsageError(f"--dataset {kind} needs --in")
    elif kind == "ucihar":
        ws = load_ucihar(src)
    else:
        schema_src = _pick(args.schema, ds, "schema")
        if schema_src is None:
            raise UsageError("--dataset csv needs --schema")
        schema = CsvSchema.load(schema_src) if isinstance(schema_src, str) else CsvSchema.from_dict(schema_src)
        window_len, overlap = WINDOWING.get(_pick(args.windowing, ds, "windowing"), (None, None))
        window_len = _pick(args.window_len, ds, "window_len", window_len)
        overlap = _pick(args.overlap, ds, "overlap", overlap)
        if window_len is None or overlap is None:
            raise UsageError("--dataset csv needs --windowing or both --window-len and --overlap")
        settings.update(schema=schema_src, window_len=int(window_len), overlap=float(overlap))
        recs = load_csv_recordings(src, schema)
        ws = segment_all(recs, int(window_len), float(overlap), class_table(recs, schema), dataset="csv")
        if isinstance(schema_src, str):
            inputs["schema"] = sha256_file(schema_src)
    write_swnd(ws, out)
    n, t, c = ws.data.shape
    print(f"wrote {n} windows of {t}x{c} to {out}")
    for name, count in zip(ws.class_names, ws.class_counts()):
        print(f"  {name}\t{int(count)}")
    m = RunManifest(kind="ingest", method=kind, seed=rc.seed if args.seed is None else args.seed,
                    config={"dataset": kind, "in": src, "out": os.fspath(out), "windows": n, **settings},
                    wall_clock_s=time.perf_counter() - t0,
                    artifacts={"out": sha256_file(out), **inputs},
                    extra={"class_counts": [int(x) for x in ws.class_counts()]})
    _write_manifest(m, f"{out}.json")
    return EXIT_OK


# --------------------------------------------------------------------------- augment


def _augment_spec(args, section: dict) -> AugmentSpec:
    if args.spec is not None:
        spec = AugmentSpec.from_dict(_aug_arg(args.spec))
    elif args.kind is not None:
        params: dict[str, Any] = {}
        if args.kind == "resample":
            params = {k: v for k, v in (("M", args.M), ("N", args.N), ("interpolation", args.interpolation),
                                        ("mode", args.mode), ("draw_policy", args.draw_policy)) if v is not None}
        elif args.kind == "noise" and args.bound is not None:
            params = {"bound": args.bound}
        spec = AugmentSpec(args.kind, params)
    elif "spec" in section:
        spec = AugmentSpec.from_dict(section["spec"])
    else:
        raise UsageError("augment needs --kind or --spec")
    if spec is None:
        raise UsageError("the identity augmentation has nothing to write")
    return spec


def _augment_chunk(spec: AugmentSpec, seed: int, item):
    data, streams = item
    return apply_batch(spec, data, seed, streams)


def cmd_augment(args) -> int:
    rc = _load_config(args)
    section = rc.augmentation
    spec = _augment_spec(args, section)
    seed = args.seed if args.seed is not None else rc.seed
    times = _pick(args.times, section, "times")
    ws = read_swnd(args.inp)
    t0 = time.perf_counter()
    if times is not None:
        if times < 1:
            raise UsageError("--times must be at least 1")
        out_ws = expand_with_augmentation(ws, spec, int(times), seed)
    else:
        n = len(ws)
        bounds = np.linspace(0, n, min(max(_workers(args), 1), max(n, 1)) + 1).astype(int)
        chunks = [(ws.data[a:b], np.arange(a, b)) for a, b in zip(bounds[:-1], bounds[1:])]
        parts = parallel_map(partial(_augment_chunk, spec, seed), chunks, _workers(args))
        data = np.concatenate(parts) if parts else ws.data
        out_ws = ws.with_data(data, augmentation=spec.to_dict(), seed=seed)
    write_swnd(out_ws, args.out)
    print(f"wrote {len(out_ws)} windows ({spec.name}) to {args.out}")
    m = RunManifest(kind="augment", method=spec.name, seed=seed,
                    config={"spec": spec.to_dict(), "times": times, "in": os.fspath(args.inp)},
                    wall_clock_s=time.perf_counter() - t0,
                    artifacts={"in": sha256_file(args.inp), "out": sha256_file(args.out)})
    _write_manifest(m, f"{args.out}.json")
    return EXIT_OK


# --------------------------------------------------------------------------- pretrain


def _pretrain_config(args, rc: RunConfig) -> PretrainConfig:
    section = dict(rc.pretrain)
    framework = _pick(args.framework, section, "framework", "simclr")
    profile = _pick(args.profile, section, "profile", "paper")
    section.pop("framework", None)
    section.pop("profile", None)
    aug = rc.augmentation
    for key in ("aug1", "aug2"):
        if key in aug:
            section.setdefault(key, aug[key])
    overrides = {
        "epochs": args.epochs, "batch_size": args.batch_size, "lr": args.lr, "temperature": args.temperature,
        "K": args.K, "momentum": args.momentum, "checkpoint_every": args.checkpoint_every,
        "aug1": _aug_arg(args.aug1), "aug2": _aug_arg(args.aug2),
        "seed": args.seed if args.seed is not None else section.get("seed", rc.seed),
    }
    section.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(section) - set(PretrainConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown pretraining fields {sorted(unknown)}")
    return PretrainConfig.for_profile(framework, profile, **section)


def cmd_pretrain(args) -> int:
    rc = _load_config(args)
    cfg = _pretrain_config(args, rc)
    if args.dry_run:
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    data_path = _pick(args.data, rc.dataset, "swnd")
    out = _pick(args.out, {"out": rc.out}, "out")
    if data_path is None or out is None:
        raise UsageError("pretrain needs --data and --out")
    ws = read_swnd(data_path)
    os.makedirs(out, exist_ok=True)
    if cfg.checkpoint_every:
        cfg.checkpoint_dir = os.path.join(out, "checkpoints")

    def progress(epoch, loss):
        if args.verbose:
            print(f"epoch {epoch + 1}/{cfg.epochs}  loss {loss:.5f}", flush=True)

    params, manifest = pretrain(ws, cfg, on_epoch=progress)
    ckpt = os.path.join(out, CHECKPOINT)
    save_params(params, ckpt)
    manifest.artifacts["checkpoint"] = sha256_file(ckpt)
    manifest.artifacts["data_file"] = sha256_file(data_path)
    manifest.extra["data_path"] = os.fspath(data_path)
    losses = manifest.epoch_losses
    if losses:
        print(f"{cfg.framework}: {cfg.epochs} epochs, loss {losses[0]:.4f} -> {losses[-1]:.4f}")
    print(f"checkpoint: {ckpt}")
    _write_manifest(manifest, os.path.join(out, PRETRAIN_MANIFEST))
    return EXIT_OK


# --------------------------------------------------------------------------- eval


def _encoder_for(args, checkpoint: str | None, profile: str) -> tuple[EncoderConfig, str]:
    """Encoder shape and dtype: from the pretraining manifest beside the checkpoint, else the profile."""
    if checkpoint is not None:
        side = Path(checkpoint).with_name(PRETRAIN_MANIFEST)
        if side.exists():
            pm = RunManifest.load(side)
            return EncoderConfig.from_dict(pm.config["encoder"]), pm.config.get("dtype", "float64")
    if profile == "desk":
        return DESK_ENCODER, "float32"
    if profile == "paper":
        return EncoderConfig(), "float64"
    raise ConfigError(f"unknown profile {profile!r}")


def cmd_eval(args) -> int:
    rc = _load_config(args)
    section = dict(rc.eval)
    protocol = _pick(args.protocol, section, "protocol", "linear")
    profile = _pick(args.profile, section, "profile", "paper")
    checkpoint = _pick(args.checkpoint, section, "checkpoint")
    section.pop("profile", None)
    section.pop("checkpoint", None)
    if protocol != "supervised" and checkpoint is None:
        raise UsageError(f"the {protocol} protocol needs --checkpoint")
    if checkpoint is not None and not os.path.exists(checkpoint):
        raise UsageError(f"checkpoint {checkpoint} does not exist")
    encoder, dtype = _encoder_for(args, checkpoint, profile)
    section.setdefault("encoder", encoder.to_dict())
    section.setdefault("dtype", dtype)
    if args.aug is not None:
        section["aug"] = _aug_arg(args.aug)
    overrides = {
        "protocol": protocol, "label_fraction": args.label_fraction, "repetitions": args.repeats,
        "epochs": args.epochs, "batch_size": args.batch_size, "lr": args.lr, "augment_times": args.augment_times,
        "seed": args.seed if args.seed is not None else section.get("seed", rc.seed),
    }
    section.update({k: v for k, v in overrides.items() if v is not None})
    cfg = EvalConfig.from_dict(section)
    data_path = _pick(args.data, rc.dataset, "swnd")
    if data_path is None:
        raise UsageError("eval needs --data")
    ws = read_swnd(data_path)
    params = load_params(checkpoint) if protocol != "supervised" else None
    arts = {"data_file": sha256_file(data_path)}
    if checkpoint is not None:
        arts["checkpoint"] = sha256_file(checkpoint)
    m = evaluate(ws, cfg, params, method=args.method, artifacts=arts, workers=_workers(args))
    m.extra.update({"data_path": os.fspath(data_path), "checkpoint_path": checkpoint})
    for r, s in enumerate(m.scores):
        print(f"repetition {r}\tmacro-F1 {s:.4f}")
    report = stat_report(m.method, m.scores)
    if report.lower is None:
        print(f"{m.method}: macro-F1 {report.mean:.4f}")
    else:
        print(f"{m.method}: mean macro-F1 {report.mean:.4f}  95% limits [{report.lower:.4f}, {report.upper:.4f}]")
    out = _pick(args.out, {"out": rc.out}, "out")
    if out is not None:
        _write_manifest(m, out)
    return EXIT_OK


# --------------------------------------------------------------------------- report


def _collect(paths) -> tuple[dict[tuple[str, float], RunManifest], dict[str, list[float]]]:
    evals: dict[tuple[str, float], RunManifest] = {}
    curves: dict[str, list[float]] = {}
    for p in paths:
        m = RunManifest.load(p)
        if m.kind == "eval":
            key = (m.method or m.config.get("protocol", "?"), float(m.config["label_fraction"]))
            if key in evals:
                raise UsageError(f"{p}: a second manifest for {key[0]} at fraction {key[1]:g}")
            evals[key] = m
        elif m.epoch_losses:
            curves[f"{m.method or m.kind} (seed {m.seed})"] = list(m.epoch_losses)
    return evals, curves


def cmd_report(args) -> int:
    evals, curves = _collect(args.manifests)
    if not evals:
        raise UsageError("no evaluation manifests given")
    methods = {k[0] for k in evals}
    if args.baseline is not None and args.baseline not in methods:
        raise UsageError(f"baseline {args.baseline!r} is not among the methods {sorted(methods)}")
    rows, reports = [], []
    for (method, fraction), m in sorted(evals.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        baselines = {}
        if args.baseline is not None and method != args.baseline:
            base = evals.get((args.baseline, fraction))
            if base is not None:
                if len(base.scores) != len(m.scores):
                    raise UsageError(f"{method} has {len(m.scores)} repetitions at fraction {fraction:g} "
                                     f"but {args.baseline} has {len(base.scores)}")
                if len(m.scores) < 5:
                    print(f"warning: {method} at fraction {fraction:g}: {len(m.scores)} repetitions are too few "
                          "for a signed-rank test; no verdict", file=sys.stderr)
                else:
                    baselines[args.baseline] = base.scores
        rep = stat_report(f"{method}@{100 * fraction:g}%", m.scores, baselines, args.alpha)
        reports.append(rep)
        cmp = rep.comparisons.get(args.baseline) if args.baseline else None
        rows.append({"method": method, "fraction": fraction, "n": len(m.scores), "mean": rep.mean,
                     "lower": rep.lower, "upper": rep.upper, "baseline": args.baseline if cmp else "",
                     "p_value": cmp.p_value if cmp else None, "verdict": cmp.verdict if cmp else ""})
    os.makedirs(args.out, exist_ok=True)
    tsv = os.path.join(args.out, "report.tsv")
    cols = ["method", "fraction", "n", "mean", "lower", "upper", "baseline", "p_value", "verdict"]
    with open(tsv, "w", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow(["" if r[c] is None else (f"{r[c]:.6g}" if isinstance(r[c], float) else r[c]) for c in cols])
    from senres import plotting

    figures = [os.path.join(args.out, "scores.png")]
    plotting.plot_scores(rows, figures[0])
    if curves:
        figures.append(os.path.join(args.out, "losses.png"))
        plotting.plot_losses(curves, figures[1])
    print(render_table(reports), end="")
    print(f"table: {tsv}")
    for fig in figures:
        print(f"figure: {fig}")
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="senres", description="Resampling augmentation and contrastive "
                                "pretraining for inertial-sensor activity recognition.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config; flags override its fields")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int,
                        help=f"process fan-out for augmentation and repetitions (default ${ENV_WORKERS} or 1)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="convert raw recordings to an SWND window file")
    s.add_argument("--dataset", choices=("ucihar", "csv", "synthetic"))
    s.add_argument("--in", dest="inp", help="dataset directory")
    s.add_argument("--out", help="output .swnd path")
    s.add_argument("--schema", help="CSV schema (JSON)")
    s.add_argument("--windowing", choices=sorted(WINDOWING), help="preset window length and overlap")
    s.add_argument("--window-len", type=int)
    s.add_argument("--overlap", type=float)
    s.add_argument("--per-class", type=int, help="synthetic windows per class")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("augment", parents=[common], help="write an augmented copy of an SWND file")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--kind", choices=("noise", "rotate", "scale", "magnify", "invert", "reverse", "resample"))
    s.add_argument("--spec", help="augmentation as short form, inline JSON or a .json file")
    s.add_argument("--M", type=int)
    s.add_argument("--N", type=int)
    s.add_argument("--interpolation", choices=("linear", "lagrange", "cubic_spline"))
    s.add_argument("--mode", choices=("A", "B"))
    s.add_argument("--draw-policy", choices=("fixed", "random"))
    s.add_argument("--bound", type=float, help="noise bound")
    s.add_argument("--times", type=int, help="keep the originals and append this many augmented copies")
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("pretrain", parents=[common], help="contrastive pretraining")
    s.add_argument("--data", help="input .swnd")
    s.add_argument("--out", help="output directory")
    s.add_argument("--framework", choices=("simclr", "moco"))
    s.add_argument("--profile", choices=("paper", "desk"))
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--temperature", type=float)
    s.add_argument("--K", type=int, help="moco queue size")
    s.add_argument("--momentum", type=float)
    s.add_argument("--aug1", help="first-branch augmentation (default identity)")
    s.add_argument("--aug2", help="second-branch augmentation (default random resampling)")
    s.add_argument("--checkpoint-every", type=int)
    s.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
    s.add_argument("-v", "--verbose", action="store_true")
    s.set_defaults(func=cmd_pretrain)

    s = sub.add_parser("eval", parents=[common], help="supervised, linear or fine-tuning evaluation")
    s.add_argument("--data", help="input .swnd")
    s.add_argument("--protocol", choices=("supervised", "linear", "finetune"))
    s.add_argument("--checkpoint", help="encoder .sprm (linear and finetune)")
    s.add_argument("--profile", choices=("paper", "desk"))
    s.add_argument("--label-fraction", type=float)
    s.add_argument("--repeats", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--augment-times", type=int)
    s.add_argument("--aug", help="supervised-training augmentation")
    s.add_argument("--method", help="name used in reports (default: the protocol)")
    s.add_argument("--out", help="manifest path")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", help="compare evaluation manifests")
    s.add_argument("manifests", nargs="+")
    s.add_argument("--baseline", help="method every other method is tested against")
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--out", required=True, help="output directory for report.tsv and figures")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as e:
        print(f"error: training diverged at epoch {e.epoch}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except SenresError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"error: {e.filename}: {e.strerror}", file=sys.stderr)
        return EXIT_USAGE
    except (IsADirectoryError, PermissionError) as e:
        print(f"error: {e.filename}: {e.strerror}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
