"""Command-line entry point: ``train``, ``eval``, ``gradcheck`` and ``minebench``.

Exit codes: 0 on success, 1 on runtime errors (or failed checks), 2 on
invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import fields

import numpy as np

from .datasets import (
    Dataset,
    SyntheticSpec,
    gen_synthetic,
    gen_synthetic_video,
    load_csv,
    save_csv,
    sod_dataset,
    train_test_split,
)
from .errors import InvalidConfig, TripletRegError
from .geometry import l2_normalize, pairwise_sq_distances
from .gradcheck import COMPONENTS, TOLERANCE, run_gradcheck
from .mining import batch_hard_oracle, mine_batch_hard, mine_semi_hard, semi_hard_oracle
from .network import ConvSpec, NetConfig, desk_config, init_params, load_checkpoint, save_checkpoint
from .tensor import make_rng
from .trainer import TrainConfig, evaluate_model, train

CONFIG_KEYS = {"seed", "data", "net", "train", "eval", "output"}
DATA_KEYS = {"synthetic", "csv", "header", "video", "test_fraction", "input_shape"}
NET_KEYS = {"d_emb", "channels", "convs"}
EVAL_KEYS = {"ks"}
OUTPUT_KEYS = {"dir"}
VIDEO_KEYS = {"n_classes", "n_per_class", "size", "n_frames"}


def _reject_unknown(section: dict, allowed: set, path: str):
    if not isinstance(section, dict):
        raise InvalidConfig(f"{path or 'config'} must be an object")
    for key in section:
        if key not in allowed:
            raise InvalidConfig(f"unknown key {path + '.' if path else ''}{key}")


def load_run_config(path) -> dict:
    """Parse and validate a JSON run configuration, rejecting unknown keys."""
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{path}: {exc}") from None
    _reject_unknown(cfg, CONFIG_KEYS, "")
    data = cfg.setdefault("data", {"synthetic": {}})
    _reject_unknown(data, DATA_KEYS, "data")
    sources = [k for k in ("synthetic", "csv", "video") if k in data]
    if len(sources) != 1:
        raise InvalidConfig("data needs exactly one of synthetic, csv, video")
    if "synthetic" in data:
        _reject_unknown(data["synthetic"], {f.name for f in fields(SyntheticSpec)}, "data.synthetic")
    if "video" in data:
        _reject_unknown(data["video"], VIDEO_KEYS, "data.video")
    _reject_unknown(cfg.setdefault("net", {}), NET_KEYS, "net")
    TrainConfig.from_dict(cfg.setdefault("train", {}))
    _reject_unknown(cfg.setdefault("eval", {}), EVAL_KEYS, "eval")
    _reject_unknown(cfg.setdefault("output", {}), OUTPUT_KEYS, "output")
    return cfg


def build_data(cfg: dict, seed: int) -> tuple[Dataset, Dataset | None]:
    data_cfg = cfg["data"]
    if "synthetic" in data_cfg:
        spec_kw = dict(data_cfg["synthetic"])
        spec_kw.setdefault("seed", seed)
        if spec_kw.get("image_shape") is not None:
            spec_kw["image_shape"] = tuple(spec_kw["image_shape"])
        data = gen_synthetic(SyntheticSpec(**spec_kw))
    elif "video" in data_cfg:
        v = data_cfg["video"]
        events = gen_synthetic_video(v.get("n_classes", 3), seed, v.get("n_per_class", 40),
                                     v.get("size", 16), v.get("n_frames", 8))
        data = sod_dataset(events, seed)
    else:
        data = load_csv(data_cfg["csv"], data_cfg.get("header", False))
        if "input_shape" in data_cfg:
            data = Dataset(data.X.reshape((len(data),) + tuple(data_cfg["input_shape"])), data.y)
    frac = data_cfg.get("test_fraction", 0.0)
    if frac > 0:
        return train_test_split(data, frac, seed)
    return data, None


def build_net_config(cfg: dict, data: Dataset) -> NetConfig:
    net_cfg = cfg["net"]
    shape = data.input_shape
    n_classes = max(int(data.n_classes), 2)
    d_emb = int(net_cfg.get("d_emb", 256))
    if "convs" in net_cfg:
        convs = tuple(ConvSpec(**c) for c in net_cfg["convs"])
        return NetConfig(shape, n_classes, d_emb, convs)
    if shape[:2] == (1, 1):
        ch = int(net_cfg.get("channels", 32))
        return NetConfig(shape, n_classes, d_emb, (ConvSpec(ch, 1, 1, 0), ConvSpec(ch, 1, 1, 0)))
    return desk_config(shape, n_classes, d_emb, int(net_cfg.get("channels", 8)))


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    train_kw = dict(cfg["train"])
    train_kw["seed"] = seed
    tcfg = TrainConfig.from_dict(train_kw)
    out_dir = args.out or cfg["output"].get("dir", "run")
    os.makedirs(out_dir, exist_ok=True)

    started = time.perf_counter()
    train_data, test_data = build_data(cfg, seed)
    net = init_params(build_net_config(cfg, train_data), seed)
    net, log = train(net, train_data, tcfg)
    save_checkpoint(net, os.path.join(out_dir, "checkpoint.txt"))
    log.to_csv(os.path.join(out_dir, "train_log.csv"))
    summary = {
        "iterations": len(log),
        "final": {k: log.records[-1][k] for k in ("loss_total", "loss_soft", "loss_embed", "mean_norm")},
        "collapse_events": [e for e in log.events if e["event"] in ("collapse", "recovered")],
        "empty_triplet_iterations": sum(e["event"] == "empty_triplet_set" for e in log.events),
        "seed": seed,
    }
    if test_data is not None:
        save_csv(os.path.join(out_dir, "test.csv"), test_data)
        ks = cfg["eval"].get("ks", [1, 4, 8, 16])
        reports = evaluate_model(net, test_data, ks, seed)
        summary["test"] = {k: r.to_dict() for k, r in reports.items()}
    summary["wall_time_s"] = time.perf_counter() - started
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(f"trained {len(log)} iterations -> {out_dir}")
    return 0


def cmd_eval(args) -> int:
    try:
        net = load_checkpoint(args.ckpt)
    except InvalidConfig as exc:
        # a bad checkpoint is a runtime mismatch, not a config error
        raise TripletRegError(str(exc)) from None
    data = load_csv(args.data, args.header)
    shape = net.config.input_shape
    if data.X.shape[1] != int(np.prod(shape)):
        raise TripletRegError(f"dataset has {data.X.shape[1]} features, checkpoint expects {shape}")
    data = Dataset(data.X.reshape((len(data),) + shape), data.y)
    ks = [int(k) for k in args.ks.split(",") if k.strip()]
    reports = evaluate_model(net, data, ks, args.seed)
    text = json.dumps({k: r.to_dict() for k, r in reports.items()}, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def cmd_gradcheck(args) -> int:
    results = run_gradcheck(args.seed, args.points, args.perturb)
    worst = 0.0
    print(f"{'component':<14} max_rel_error")
    for name in COMPONENTS:
        err = results[name]
        worst = max(worst, err)
        flag = "ok" if err < TOLERANCE else "FAIL"
        print(f"{name:<14} {err:.3e} {flag}")
    return 0 if worst < TOLERANCE else 1


def _bench_labels(rng, b):
    n_classes = int(rng.integers(2, max(2, min(10, b // 2)) + 1))
    while True:
        y = rng.integers(0, n_classes, size=b)
        if np.unique(y).size >= 2 and np.bincount(y).max() >= 2:
            return y


def cmd_minebench(args) -> int:
    if args.batch < 3:
        raise InvalidConfig("--batch must be at least 3")
    rng = make_rng(args.seed)
    rows = []
    for trial in range(args.trials):
        y = _bench_labels(rng, args.batch)
        emb, _ = l2_normalize(rng.normal(size=(args.batch, args.dim)))
        d = pairwise_sq_distances(emb)
        for strategy, fast, slow in (
            ("hard", lambda: mine_batch_hard(d, y), lambda: batch_hard_oracle(d, y)),
            ("semi_hard", lambda: mine_semi_hard(d, y, args.margin), lambda: semi_hard_oracle(d, y, args.margin)),
        ):
            t0 = time.perf_counter()
            got = fast()
            micros = (time.perf_counter() - t0) * 1e6
            ok = np.array_equal(got.triplets, slow().triplets)
            rows.append((trial, strategy, f"{micros:.1f}", len(got), int(ok)))
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(("trial", "strategy", "micros", "n_triplets", "oracle_ok"))
        writer.writerows(rows)
    finally:
        if args.out:
            out.close()
    failures = sum(1 for r in rows if not r[4])
    print(f"{len(rows) - failures}/{len(rows)} oracle matches", file=sys.stderr)
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tripletreg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a two-head network from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Recall@K / NMI / accuracy of a checkpoint on a CSV dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--ks", default="1,4,8,16")
    p.add_argument("--header", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("minebench", help="time the miners and compare them with brute force")
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--margin", type=float, default=0.2)
    p.add_argument("--out")
    p.set_defaults(func=cmd_minebench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidConfig as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 2
    except (TripletRegError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
