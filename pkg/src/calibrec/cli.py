"""Command-line pipeline: ingest, train, calibrate, distill, recommend, eval.

Configuration is a flat ``key=value`` file with namespaced keys (see
``CONFIG_SPEC``), overridable per invocation with ``--set key=value``.
Unknown keys are rejected. Exit codes: 0 success, 1 I/O failure,
2 validation failure.

Randomness derives from one global seed expanded into per-stage streams
(see ``seeding``); training additionally keys each epoch's stream by the
epoch number, so a resumed run consumes the same streams an uninterrupted
run would.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import calibration, metrics
from .calibration import (
    apply as apply_calibrator,
    collect_calibration_samples,
    ece,
    estimate_propensity,
    fit,
    gamma_shift,
    load_calibrator,
    reliability_table,
    save_calibrator,
    write_reliability_csv,
)
from .dataset import DataFormatError, Dataset, IdMaps, load_interactions, split_per_user
from .distill import BdConfig, cotrain_epoch
from .perk import PerkConfig, PersonalizedCut, perk_recommend
from .ranker import (
    TrainConfig,
    bpr_epoch,
    init_params,
    load_checkpoint,
    pointwise_epoch,
    rank_items,
    save_checkpoint,
)
from .seeding import stream_seed


# ---------------------------------------------------------------------------
# configuration registry


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


def _names(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _choice(*options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {options}, got {text!r}")
        return text

    return parse


# key -> (parser, default, help)
CONFIG_SPEC = {
    "seed": (int, 0, "global seed; every stage derives its own stream from it"),
    "data.delimiter": (str, ",", "field separator of interaction and split files"),
    "data.ratios": (_floats, (0.8, 0.1, 0.1), "train,validation,test split fractions"),
    "train.dim": (int, 32, "embedding dimension"),
    "train.lr": (float, 0.05, "SGD learning rate"),
    "train.reg": (float, 1e-4, "L2 weight on embeddings"),
    "train.epochs": (int, 10, "training epochs (0 writes the initialization)"),
    "train.batch_size": (int, 128, "positives per SGD batch"),
    "train.loss": (_choice("bpr", "pointwise"), "bpr", "training objective"),
    "train.negatives_per_positive": (int, 4, "sampled negatives per positive (pointwise)"),
    "calib.kind": (
        _choice("platt", "gaussian", "gamma", "histogram"),
        "platt",
        "calibration map",
    ),
    "calib.negatives_per_positive": (int, 4, "sampled negatives per validation positive"),
    "calib.unbiased": (_bool, False, "weight the likelihood by inverse propensities"),
    "calib.tau": (float, 0.5, "propensity popularity exponent"),
    "calib.theta_min": (float, 0.01, "propensity clip floor"),
    "calib.max_iters": (int, 1000, "optimizer iteration cap"),
    "calib.tol": (float, 1e-8, "optimizer gradient tolerance"),
    "calib.num_bins": (int, 15, "bins for ECE / reliability / histogram calibrator"),
    "calib.scheme": (_choice("equal_width", "equal_mass"), "equal_width", "binning scheme"),
    "bd.teacher_dim": (int, 64, "teacher embedding dimension"),
    "bd.student_dim": (int, 8, "student embedding dimension"),
    "bd.lambda_ts": (float, 0.5, "teacher's distillation-from-student weight"),
    "bd.lambda_st": (float, 0.5, "student's distillation-from-teacher weight"),
    "bd.sample_size": (int, 10, "distillation items sampled per user per epoch"),
    "bd.eta": (float, 0.1, "rank-discrepancy sharpness"),
    "bd.truncate_rank": (int, 100, "ranks beyond this are clamped"),
    "bd.epochs": (int, 10, "co-training epochs"),
    "bd.save_every": (int, 0, "checkpoint interval in epochs (0 = final only)"),
    "perk.k_max": (int, 50, "largest cutoff considered"),
    "perk.utility": (
        _choice("precision", "recall", "f1", "ndcg"),
        "f1",
        "expected utility maximized per user",
    ),
    "perk.rest_pool": (int, 500, "extra candidates feeding the remaining-relevant count"),
    "eval.split": (_choice("validation", "test"), "test", "split evaluated against"),
    "eval.ks": (_ints, (1, 5, 10, 20), "fixed cutoffs in evaluation reports"),
    "eval.metrics": (
        _names,
        ("precision", "recall", "f1", "ndcg"),
        "metrics in evaluation reports",
    ),
}


def config_reference() -> str:
    lines = ["configuration keys (key = default): description", ""]
    for key, (_, default, help_text) in CONFIG_SPEC.items():
        if isinstance(default, tuple):
            default = ",".join(str(v) for v in default)
        lines.append(f"{key} = {default}")
        lines.append(f"    {help_text}")
    return "\n".join(lines) + "\n"


def load_config(path=None, overrides=()) -> dict:
    """Defaults, then the config file, then --set overrides; unknown keys fail."""
    cfg = {key: default for key, (_, default, _) in CONFIG_SPEC.items()}

    def assign(key: str, raw: str, where: str):
        if key not in CONFIG_SPEC:
            raise ValueError(f"{where}: unknown configuration key {key!r}")
        parser = CONFIG_SPEC[key][0]
        try:
            cfg[key] = parser(raw)
        except ValueError as exc:
            raise ValueError(f"{where}: bad value for {key}: {exc}") from None

    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                if "=" not in stripped:
                    raise ValueError(f"{path}:{line_no}: expected key=value, got {stripped!r}")
                key, _, raw = stripped.partition("=")
                assign(key.strip(), raw.strip(), f"{path}:{line_no}")
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        assign(key.strip(), raw.strip(), "--set")
    return cfg


# ---------------------------------------------------------------------------
# file helpers

BUNDLE_FILES = ("user_map.json", "item_map.json", "train.txt", "validation.txt", "test.txt")


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _append_jsonl(path, row):
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_jsonl(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


def _write_split(path, pairs, delimiter):
    with open(path, "w", encoding="utf-8") as fh:
        for u, i in sorted(pairs):
            fh.write(f"{u}{delimiter}{i}\n")


def _read_split(path, delimiter):
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            stripped = line.strip()
            if stripped:
                u, i = stripped.split(delimiter)[:2]
                pairs.append((int(u), int(i)))
    return pairs


def _dataset_from_pairs(num_users, num_items, train, validation, test) -> Dataset:
    def group(pairs):
        grouped: dict[int, set[int]] = {}
        for u, i in pairs:
            grouped.setdefault(u, set()).add(i)
        return {u: frozenset(items) for u, items in grouped.items()}

    popularity = np.zeros(num_items, dtype=np.int64)
    for _, i in train:
        popularity[i] += 1
    return Dataset(
        num_users=num_users,
        num_items=num_items,
        train_by_user=group(train),
        validation_by_user=group(validation),
        test_by_user=group(test),
        item_popularity=popularity,
    )


def load_bundle(bundle_dir, delimiter=",") -> tuple[Dataset, IdMaps]:
    """Read a dataset bundle written by ``ingest``."""
    bundle = Path(bundle_dir)
    with open(bundle / "user_map.json", "r", encoding="utf-8") as fh:
        user_map = json.load(fh)
    with open(bundle / "item_map.json", "r", encoding="utf-8") as fh:
        item_map = json.load(fh)
    maps = IdMaps(user_to_index=user_map, item_to_index=item_map)
    dataset = _dataset_from_pairs(
        maps.num_users,
        maps.num_items,
        _read_split(bundle / "train.txt", delimiter),
        _read_split(bundle / "validation.txt", delimiter),
        _read_split(bundle / "test.txt", delimiter),
    )
    return dataset, maps


def load_recommendations(path):
    """Read a recommendation JSONL file into lists or PersonalizedCuts."""
    rows = read_jsonl(path)
    if rows and "k_star" in rows[0]:
        return [
            PersonalizedCut(
                user=row["user"],
                k_star=row["k_star"],
                curve=np.array(row["curve"], dtype=float),
                items=list(row["items"]),
                k_max_effective=len(row["curve"]),
            )
            for row in rows
        ]
    return {row["user"]: list(row["items"]) for row in rows}


# ---------------------------------------------------------------------------
# training-stream derivation (shared by train and distill so that a
# lambda=0 co-training run is reproducible command by command)


def _train_init_seed(cfg, base_stream):
    if base_stream == "train":
        return stream_seed(cfg["seed"], "train", 0)
    model = 0 if base_stream == "distill-teacher" else 1
    return stream_seed(cfg["seed"], "bd", 0, model)


def _train_epoch_rng(cfg, base_stream, epoch):
    if base_stream == "train":
        return np.random.default_rng(stream_seed(cfg["seed"], "train", 1 + epoch))
    parent = np.random.default_rng(stream_seed(cfg["seed"], "bd", 1 + epoch))
    children = parent.spawn(2)
    return children[0] if base_stream == "distill-teacher" else children[1]


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args, cfg) -> int:
    pairs, maps = load_interactions(args.input, delimiter=cfg["data.delimiter"])
    dataset = split_per_user(
        pairs,
        ratios=cfg["data.ratios"],
        seed=stream_seed(cfg["seed"], "data"),
        num_users=maps.num_users,
        num_items=maps.num_items,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "user_map.json", maps.user_to_index)
    _write_json(out / "item_map.json", maps.item_to_index)
    delim = cfg["data.delimiter"]
    _write_split(out / "train.txt", dataset.train, delim)
    _write_split(out / "validation.txt", dataset.validation, delim)
    _write_split(out / "test.txt", dataset.test, delim)
    print(
        f"ingested {len(pairs)} interactions: {maps.num_users} users, "
        f"{maps.num_items} items; splits train={len(dataset.train)} "
        f"validation={len(dataset.validation)} test={len(dataset.test)}"
    )
    return 0


def cmd_train(args, cfg) -> int:
    dataset, _ = load_bundle(args.data, cfg["data.delimiter"])
    train_cfg = TrainConfig(
        lr=cfg["train.lr"],
        reg=cfg["train.reg"],
        epochs=max(1, cfg["train.epochs"]),
        batch_size=cfg["train.batch_size"],
        loss_kind=cfg["train.loss"],
        negatives_per_positive=cfg["train.negatives_per_positive"],
        seed=cfg["seed"],
    )
    epoch_fn = bpr_epoch if train_cfg.loss_kind == "bpr" else pointwise_epoch

    if args.resume:
        params, header = load_checkpoint(args.resume)
        start_epoch = header.get("epochs_trained", 0)
    else:
        params = init_params(
            dataset.num_users,
            dataset.num_items,
            cfg["train.dim"],
            seed=_train_init_seed(cfg, args.base_stream),
        )
        start_epoch = 0

    log_path = Path(args.log) if args.log else Path(str(args.out) + "_log.jsonl")
    if not args.resume and log_path.exists():
        log_path.unlink()
    for epoch in range(start_epoch, cfg["train.epochs"]):
        rng = _train_epoch_rng(cfg, args.base_stream, epoch)
        params, loss = epoch_fn(params, dataset, train_cfg, rng)
        _append_jsonl(log_path, {"epoch": epoch, "loss": loss})
        print(f"epoch {epoch}: loss {loss:.6f}")
    save_checkpoint(
        params,
        args.out,
        seed=cfg["seed"],
        loss_kind=train_cfg.loss_kind,
        epochs_trained=max(start_epoch, cfg["train.epochs"]),
    )
    return 0


def cmd_calibrate(args, cfg) -> int:
    dataset, _ = load_bundle(args.data, cfg["data.delimiter"])
    params, _ = load_checkpoint(args.ckpt)
    propensity = (
        estimate_propensity(dataset.item_popularity, cfg["calib.tau"], cfg["calib.theta_min"])
        if cfg["calib.unbiased"]
        else None
    )
    fit_samples = collect_calibration_samples(
        params,
        dataset,
        rng=np.random.default_rng(stream_seed(cfg["seed"], "calib", 0)),
        negatives_per_positive=cfg["calib.negatives_per_positive"],
        propensity=propensity,
    )
    eval_samples = collect_calibration_samples(
        params,
        dataset,
        rng=np.random.default_rng(stream_seed(cfg["seed"], "calib", 1)),
        negatives_per_positive=cfg["calib.negatives_per_positive"],
    )

    kind = cfg["calib.kind"]
    shift = gamma_shift([smp.s for smp in fit_samples]) if kind == "gamma" else 0.0
    cal = fit(
        kind,
        fit_samples,
        unbiased=cfg["calib.unbiased"],
        max_iters=cfg["calib.max_iters"],
        tol=cfg["calib.tol"],
        score_shift=shift,
        num_bins=cfg["calib.num_bins"],
    )

    eval_scores = np.array([smp.s for smp in eval_samples])
    eval_labels = np.array([smp.y for smp in eval_samples], dtype=float)
    raw_pairs = np.column_stack([expit(eval_scores), eval_labels])
    cal_pairs = np.column_stack([np.atleast_1d(apply_calibrator(cal, eval_scores)), eval_labels])
    num_bins, scheme = cfg["calib.num_bins"], cfg["calib.scheme"]
    ece_raw = ece(raw_pairs, num_bins, scheme)
    ece_cal = ece(cal_pairs, num_bins, scheme)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_calibrator(cal, out / "calibrator.json")
    write_reliability_csv(reliability_table(cal_pairs, num_bins, scheme), out / "reliability.csv")
    _write_json(
        out / "calibration_report.json",
        {
            "kind": kind,
            "unbiased": cfg["calib.unbiased"],
            "score_shift": shift,
            "num_fit_samples": len(fit_samples),
            "num_eval_samples": len(eval_samples),
            "ece_raw": ece_raw,
            "ece_calibrated": ece_cal,
            "num_bins": num_bins,
            "scheme": scheme,
        },
    )
    print(f"{kind}: ece raw {ece_raw:.4f} -> calibrated {ece_cal:.4f}")
    return 0


def cmd_distill(args, cfg) -> int:
    dataset, _ = load_bundle(args.data, cfg["data.delimiter"])
    base_cfg = TrainConfig(
        lr=cfg["train.lr"],
        reg=cfg["train.reg"],
        epochs=1,
        batch_size=cfg["train.batch_size"],
        loss_kind="pointwise",
        negatives_per_positive=cfg["train.negatives_per_positive"],
        seed=cfg["seed"],
    )
    bd_cfg = BdConfig(
        lambda_ts=cfg["bd.lambda_ts"],
        lambda_st=cfg["bd.lambda_st"],
        sample_size=cfg["bd.sample_size"],
        eta=cfg["bd.eta"],
        truncate_rank=cfg["bd.truncate_rank"],
        epochs=cfg["bd.epochs"],
        seed=cfg["seed"],
    )
    teacher = init_params(
        dataset.num_users, dataset.num_items, cfg["bd.teacher_dim"],
        seed=stream_seed(cfg["seed"], "bd", 0, 0),
    )
    student = init_params(
        dataset.num_users, dataset.num_items, cfg["bd.student_dim"],
        seed=stream_seed(cfg["seed"], "bd", 0, 1),
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "cotrain_log.jsonl"
    if log_path.exists():
        log_path.unlink()
    save_every = args.save_every if args.save_every is not None else cfg["bd.save_every"]

    def save_both(epochs_done):
        save_checkpoint(teacher, out / "teacher", seed=cfg["seed"],
                        loss_kind="pointwise", epochs_trained=epochs_done)
        save_checkpoint(student, out / "student", seed=cfg["seed"],
                        loss_kind="pointwise", epochs_trained=epochs_done)

    report = None
    for epoch in range(bd_cfg.epochs):
        rng = np.random.default_rng(stream_seed(cfg["seed"], "bd", 1 + epoch))
        teacher, student, report = cotrain_epoch(teacher, student, dataset, base_cfg, bd_cfg, rng)
        _append_jsonl(log_path, report.teacher.as_row(epoch, "teacher"))
        _append_jsonl(log_path, report.student.as_row(epoch, "student"))
        print(
            f"epoch {epoch}: teacher base {report.teacher.base_loss:.4f} "
            f"distill {report.teacher.distill_loss:.4f} | student base "
            f"{report.student.base_loss:.4f} distill {report.student.distill_loss:.4f}"
        )
        if save_every and (epoch + 1) % save_every == 0:
            save_both(epoch + 1)
    save_both(bd_cfg.epochs)

    student_lists = {
        u: rank_items(student, u, exclude=dataset.train_items(u))[:10]
        for u in range(dataset.num_users)
    }
    recall_result = metrics.evaluate(
        student_lists, dataset, split="validation", metrics=("recall",), ks=(10,)
    )
    summary = {
        "epochs": bd_cfg.epochs,
        "student_recall_at_10": recall_result.rows[0].means["recall"],
        "final": {
            "teacher": report.teacher.as_row(bd_cfg.epochs - 1, "teacher") if report else None,
            "student": report.student.as_row(bd_cfg.epochs - 1, "student") if report else None,
        },
    }
    _write_json(out / "distill_summary.json", summary)
    print(f"student validation recall@10: {summary['student_recall_at_10']:.4f}")
    return 0


def cmd_recommend(args, cfg) -> int:
    dataset, _ = load_bundle(args.data, cfg["data.delimiter"])
    params, _ = load_checkpoint(args.ckpt)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if out_path.exists():
        out_path.unlink()

    def extra_excluded(user):
        if args.exclude_validation:
            return dataset.validation_by_user.get(user, frozenset())
        return frozenset()

    if args.perk:
        if not args.calibrator:
            raise ValueError("--perk requires --calibrator")
        cal = load_calibrator(args.calibrator)
        perk_cfg = PerkConfig(
            k_max=cfg["perk.k_max"], utility=cfg["perk.utility"], rest_pool=cfg["perk.rest_pool"]
        )
        cuts = []
        for user in range(dataset.num_users):
            if len(dataset.train_items(user)) >= dataset.num_items:
                continue
            cut = perk_recommend(
                params, cal, dataset, user, perk_cfg, exclude_extra=extra_excluded(user)
            )
            cuts.append(cut)
            _append_jsonl(
                out_path,
                {
                    "user": cut.user,
                    "k_star": cut.k_star,
                    "curve": [float(v) for v in cut.curve],
                    "items": cut.items,
                },
            )
        if args.summary:
            _write_perk_summary(args.summary, cuts, dataset, cfg)
        print(f"wrote {len(cuts)} personalized lists to {out_path}")
    else:
        if args.k is None:
            raise ValueError("fixed mode requires --k (or pass --perk)")
        written = 0
        for user in range(dataset.num_users):
            ranked = rank_items(
                params, user, exclude=dataset.train_items(user) | extra_excluded(user)
            )
            if not ranked:
                continue
            if len(ranked) < args.k and not args.allow_fewer:
                raise ValueError(
                    f"user {user} has only {len(ranked)} candidates for k={args.k}; "
                    "pass --allow-fewer to emit short lists"
                )
            _append_jsonl(out_path, {"user": user, "items": ranked[: args.k]})
            written += 1
        print(f"wrote {written} top-{args.k} lists to {out_path}")
    return 0


def _write_perk_summary(path, cuts, dataset, cfg):
    split_sets = dataset.by_user(cfg["eval.split"])
    histogram: dict[int, int] = {}
    expected = []
    realized = []
    metric_fn = metrics._METRIC_FNS[cfg["perk.utility"]]
    for cut in cuts:
        histogram[cut.k_star] = histogram.get(cut.k_star, 0) + 1
        expected.append(float(cut.curve[cut.k_star - 1]))
        relevant = split_sets.get(cut.user)
        if relevant:
            realized.append(metric_fn(cut.items, set(relevant), cut.k_star))
    _write_json(
        path,
        {
            "utility": cfg["perk.utility"],
            "num_users": len(cuts),
            "mean_k_star": float(np.mean([c.k_star for c in cuts])) if cuts else None,
            "k_star_histogram": {str(k): v for k, v in sorted(histogram.items())},
            "mean_expected_utility_at_k_star": float(np.mean(expected)) if expected else None,
            "mean_realized_utility_at_k_star": float(np.mean(realized)) if realized else None,
            "realized_split": cfg["eval.split"],
        },
    )


def cmd_eval(args, cfg) -> int:
    if not args.recs and not args.perk_recs:
        raise ValueError("need --recs and/or --perk-recs")
    dataset, _ = load_bundle(args.data, cfg["data.delimiter"])
    split = cfg["eval.split"]
    ks = cfg["eval.ks"]
    names = cfg["eval.metrics"]

    def check_shapes(lists):
        for u, items in lists.items():
            if not 0 <= u < dataset.num_users:
                raise ValueError(f"recommendation user {u} outside dataset")
            for i in items:
                if not 0 <= i < dataset.num_items:
                    raise ValueError(f"recommended item {i} outside dataset")

    rows = []
    users_evaluated = users_skipped = None
    if args.recs:
        fixed = load_recommendations(args.recs)
        if not isinstance(fixed, dict):
            raise ValueError(f"{args.recs} holds personalized rows; pass it as --perk-recs")
        check_shapes(fixed)
        result = metrics.evaluate(fixed, dataset, split=split, metrics=names, ks=ks)
        rows.extend(result.rows)
        users_evaluated, users_skipped = result.users_evaluated, result.users_skipped
    if args.perk_recs:
        cuts = load_recommendations(args.perk_recs)
        if isinstance(cuts, dict):
            raise ValueError(f"{args.perk_recs} holds fixed rows; pass it as --recs")
        check_shapes({c.user: c.items for c in cuts})
        result = metrics.evaluate(cuts, dataset, split=split, metrics=names, ks=ks)
        rows.extend(result.rows)
        if users_evaluated is None:
            users_evaluated, users_skipped = result.users_evaluated, result.users_skipped

    report = {
        "split": split,
        "users_evaluated": users_evaluated,
        "users_skipped": users_skipped,
        "rows": [row.to_dict() for row in rows],
    }
    _write_json(args.out, report)
    if args.per_user_csv:
        with open(args.per_user_csv, "w", encoding="utf-8") as fh:
            fh.write("label,user,metric,value\n")
            for row in rows:
                for metric_name, values in row.per_user.items():
                    for user, value in sorted(values.items()):
                        fh.write(f"{row.label},{user},{metric_name},{value}\n")
    for row in rows:
        shown = " ".join(f"{m}={v:.4f}" for m, v in row.means.items())
        print(f"{row.label}: {shown}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(sub):
    sub.add_argument("--config", help="key=value configuration file")
    sub.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one configuration key (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="calibrec",
        description="calibrated recommendation pipeline",
        epilog=config_reference(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "--write-config-reference",
        metavar="PATH",
        help="write the configuration key reference to PATH and exit",
    )
    subs = parser.add_subparsers(dest="command")

    p = subs.add_parser("ingest", help="read an interaction log and write a dataset bundle")
    p.add_argument("--input", required=True, help="delimiter-separated interaction file")
    p.add_argument("--out", required=True, help="bundle output directory")
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = subs.add_parser("train", help="train the factorization backbone")
    p.add_argument("--data", required=True, help="dataset bundle directory")
    p.add_argument("--out", required=True, help="checkpoint base path (writes .json/.bin)")
    p.add_argument("--resume", help="checkpoint base to continue from")
    p.add_argument("--log", help="loss log path (JSON lines)")
    p.add_argument(
        "--base-stream",
        choices=("train", "distill-teacher", "distill-student"),
        default="train",
        help="which random stream to consume; the distill-* values reproduce "
        "one side of a co-training run for composition checks",
    )
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("calibrate", help="fit a score calibrator on validation data")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True, help="checkpoint base path")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_calibrate)

    p = subs.add_parser("distill", help="co-train teacher and student models")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--save-every", type=int, default=None, help="override bd.save_every")
    _add_common(p)
    p.set_defaults(func=cmd_distill)

    p = subs.add_parser("recommend", help="write fixed-K or personalized-K lists")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="recommendations path (JSON lines)")
    p.add_argument("--k", type=int, help="fixed list length")
    p.add_argument("--perk", action="store_true", help="personalized list lengths")
    p.add_argument("--calibrator", help="calibrator JSON (required with --perk)")
    p.add_argument("--summary", help="aggregate summary JSON path (perk mode)")
    p.add_argument(
        "--allow-fewer",
        action="store_true",
        help="permit lists shorter than --k when candidates run out",
    )
    p.add_argument(
        "--exclude-validation",
        action="store_true",
        help="drop validation items from the candidate pool (for clean "
        "test-split evaluation)",
    )
    _add_common(p)
    p.set_defaults(func=cmd_recommend)

    p = subs.add_parser("eval", help="score recommendation files against a split")
    p.add_argument("--data", required=True)
    p.add_argument("--recs", help="fixed-K recommendations (JSON lines)")
    p.add_argument("--perk-recs", help="personalized recommendations (JSON lines)")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--per-user-csv", help="optional per-user metric dump")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    if args.write_config_reference:
        Path(args.write_config_reference).write_text(config_reference(), encoding="utf-8")
        return 0
    if args.command is None:
        parser.print_help()
        return 2

    try:
        cfg = load_config(args.config, args.set)
        return args.func(args, cfg)
    except DataFormatError as exc:
        print(f"calibrec: invalid input: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"calibrec: validation error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"calibrec: i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
