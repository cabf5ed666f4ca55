"""Command-line surface: gen-synth, train, eval, predict.

Configuration resolves in three layers: built-in defaults, then a flat
"key = value" config file given with --config, then per-field flag
overrides.  Unknown keys are rejected and the fully resolved configuration
is echoed into the run's output directory as config.json.

Exit codes: 0 success, 1 validation failure, 2 runtime failure
(non-finite loss, I/O).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import data as data_mod
from . import embed
from .evaluation import ModelRanker, baseline_ranker, evaluate
from .synthgen import GenConfig, generate
from .training import ABLATIONS, DivergenceError, Model, TrainConfig, train

_CORPUS_KEYS = {
    "edges": "",
    "cascades": "",
    "n_steps": 6,
    "min_user_records": 10,
    "min_cascade_len": 10,
    "split_seed": 0,
}

DEFAULTS = {
    "gen-synth": {
        "out": "",
        "n_users": 500,
        "n_communities": 4,
        "d_latent": 16,
        "n_steps": 6,
        "drift_retain": 0.8,
        "drift_social": 0.15,
        "drift_noise": 0.05,
        "cascades_per_step": 40,
        "cascade_len": 15,
        "edge_density": 8.0,
        "intra_fraction": 0.8,
        "min_user_records": 10,
        "seed": 0,
    },
    "train": {
        **_CORPUS_KEYS,
        "out": "",
        "d": 128,
        "conv_layers": 1,
        "beta": 10.0,
        "lambda1": 0.5,
        "lambda2": 0.5,
        "lambda_m": 0.3,
        "lr": 0.05,
        "epochs": 200,
        "neg_pool_size": 256,
        "seed": 0,
        "train_seed_pct": 0.5,
        "ablation": "none",
        "optimizer": "sgd",
    },
    "eval": {
        **_CORPUS_KEYS,
        "out": "",
        "checkpoint": "",
        "seed_pcts": "0.5",
        "ks": "10,50,100",
        "baseline": "none",
        "split": "test",
        "seed": 0,
    },
    "predict": {
        **_CORPUS_KEYS,
        "out": "",
        "checkpoint": "",
        "prefix": "-",
        "top": 20,
    },
}


def parse_config_file(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def _coerce(key: str, value, default):
    if isinstance(default, bool):
        return str(value).lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return str(value)


def resolve_config(cmd: str, config_path, overrides: dict) -> dict:
    """defaults <- config file <- explicit flags, rejecting unknown keys."""
    defaults = DEFAULTS[cmd]
    resolved = dict(defaults)
    if config_path:
        for key, value in parse_config_file(config_path).items():
            if key not in defaults:
                raise ValueError(f"unknown config key {key!r} for command {cmd}")
            resolved[key] = _coerce(key, value, defaults[key])
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in defaults:
            raise ValueError(f"unknown option {key!r} for command {cmd}")
        resolved[key] = _coerce(key, value, defaults[key])
    return resolved


def _out_dir(cfg: dict, cmd: str) -> str:
    out = cfg.get("out") or os.path.join("runs", f"{cmd}-{time.strftime('%Y%m%d-%H%M%S')}")
    os.makedirs(out, exist_ok=True)
    return out


def _echo_config(cfg: dict, out: str):
    with open(os.path.join(out, "config.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def _require(cfg: dict, *keys):
    for key in keys:
        if not cfg[key]:
            raise ValueError(f"missing required setting {key!r}")


def _load_corpus(cfg: dict, d: int):
    _require(cfg, "edges", "cascades")
    return data_mod.load_corpus(
        cfg["edges"],
        cfg["cascades"],
        n_steps=cfg["n_steps"],
        d=d,
        min_user_records=cfg["min_user_records"],
        min_cascade_len=cfg["min_cascade_len"],
        split_seed=cfg["split_seed"],
    )


def cmd_gen_synth(cfg: dict) -> int:
    gen = GenConfig(**{k: cfg[k] for k in cfg if k != "out"})
    gen.validate()  # reject before any file is written
    out = _out_dir(cfg, "gen-synth")
    _echo_config(cfg, out)
    paths = generate(gen, out)
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return 0


def cmd_train(cfg: dict) -> int:
    corpus = _load_corpus(cfg, cfg["d"])
    train_cfg = TrainConfig(
        d=cfg["d"],
        conv_layers=cfg["conv_layers"],
        beta=cfg["beta"],
        lambda1=cfg["lambda1"],
        lambda2=cfg["lambda2"],
        lambda_m=cfg["lambda_m"],
        lr=cfg["lr"],
        epochs=cfg["epochs"],
        neg_pool_size=cfg["neg_pool_size"],
        seed=cfg["seed"],
        train_seed_pct=cfg["train_seed_pct"],
        ablation=cfg["ablation"],
        optimizer=cfg["optimizer"],
    )
    out = _out_dir(cfg, "train")
    _echo_config(cfg, out)
    result = train(corpus, train_cfg)
    checkpoint_path = os.path.join(out, "checkpoint.jsonl")
    result.model.save(checkpoint_path)
    with open(os.path.join(out, "loss_trace.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(result.loss_trace) + "\n")
    val_map10 = None
    if corpus.val_idx:
        ranker = ModelRanker(result.model, corpus)
        report = evaluate(ranker, corpus, seed_pct=0.5, ks=(10,), split="val")
        val_map10 = report.map_at[10]
    report = {
        "epochs_run": len(result.loss_trace),
        "stopped_early": result.stopped_early,
        "final_loss": result.loss_trace[-1] if result.loss_trace else None,
        "val_map10": val_map10,
        "checkpoint": checkpoint_path,
        "ablation": cfg["ablation"],
    }
    with open(os.path.join(out, "train_report.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"checkpoint: {checkpoint_path}")
    if val_map10 is not None:
        print(f"validation MAP@10: {val_map10:.4f}")
    else:
        print("validation MAP@10: n/a (empty validation split)")
    return 0


def _parse_float_list(text: str):
    return [float(x) for x in str(text).split(",") if x != ""]


def _parse_int_list(text: str):
    return [int(x) for x in str(text).split(",") if x != ""]


def cmd_eval(cfg: dict) -> int:
    _require(cfg, "checkpoint")
    model = Model.load(cfg["checkpoint"])
    corpus = _load_corpus(cfg, model.d)
    if corpus.n_users != model.n_users:
        raise ValueError(
            f"checkpoint was trained on {model.n_users} users but the corpus has {corpus.n_users}"
        )
    if corpus.n_steps != model.n_steps:
        raise ValueError(
            f"checkpoint expects {model.n_steps} time steps but the corpus has {corpus.n_steps}"
        )
    out = _out_dir(cfg, "eval")
    _echo_config(cfg, out)
    if cfg["baseline"] != "none":
        ranker = baseline_ranker(cfg["baseline"], corpus, seed=cfg["seed"])
    else:
        ranker = ModelRanker(model, corpus)
    ks = tuple(_parse_int_list(cfg["ks"]))
    for seed_pct in _parse_float_list(cfg["seed_pcts"]):
        report = evaluate(ranker, corpus, seed_pct=seed_pct, ks=ks, split=cfg["split"])
        name = f"report_seed{seed_pct:g}.json"
        with open(os.path.join(out, name), "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
        summary = ", ".join(
            f"MAP@{k}={report.map_at[k]:.4f} R@{k}={report.recall_at[k]:.4f}" for k in ks
        )
        print(f"seed_pct={seed_pct:g} [{report.n_cascades} cascades, {report.n_skipped} skipped] {summary}")
    return 0


def cmd_predict(cfg: dict) -> int:
    _require(cfg, "checkpoint")
    model = Model.load(cfg["checkpoint"])
    corpus = _load_corpus(cfg, model.d)
    if corpus.n_users != model.n_users:
        raise ValueError(
            f"checkpoint was trained on {model.n_users} users but the corpus has {corpus.n_users}"
        )
    if cfg["prefix"] == "-":
        payload = json.load(sys.stdin)
    else:
        with open(cfg["prefix"], encoding="utf-8") as fh:
            payload = json.load(fh)
    users = [int(u) for u in payload.get("users", [])]
    unknown = [u for u in users if not (0 <= u < corpus.n_users)]
    if unknown:
        raise ValueError(f"unknown user ids: {unknown}")
    if "vec" in payload:
        content_vec = embed.normalize_or_zero(np.asarray(payload["vec"], dtype=np.float64))
        if content_vec.shape != (model.d,):
            raise ValueError(f"prefix vector has shape {content_vec.shape}, expected ({model.d},)")
    else:
        content_vec = embed.embed_text(payload.get("text", ""), model.d)
    ranker = ModelRanker(model, corpus)
    ranked, scores = ranker.rank_prefix(users, content_vec)
    top = int(cfg["top"])
    lines = [f"{int(u)}\t{s:.6f}" for u, s in zip(ranked[:top], scores[:top])]
    print("\n".join(lines))
    if cfg["out"]:
        out = _out_dir(cfg, "predict")
        _echo_config(cfg, out)
        with open(os.path.join(out, "prediction.tsv"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    return 0


_COMMANDS = {
    "gen-synth": cmd_gen_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftrank",
        description="Diffusion prediction with drifting latent user interests.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, defaults in DEFAULTS.items():
        p = sub.add_parser(
            cmd,
            help=f"{cmd} (defaults overridden by --config file, then by flags)",
        )
        p.add_argument("--config", default=None, help="flat key = value config file")
        for key, default in defaults.items():
            flag = "--" + key.replace("_", "-")
            extra = {}
            if key == "ablation":
                extra["choices"] = ABLATIONS
            p.add_argument(flag, dest=key, default=None, metavar=str(default) or "PATH", **extra)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cmd = args.command
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = resolve_config(cmd, args.config, overrides)
        return _COMMANDS[cmd](cfg)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
