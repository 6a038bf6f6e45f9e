"""Command-line entry point.

Every subcommand prints a JSON summary on stdout and writes its artifacts to
the paths given. Defaults can come from an INI file (``--config`` or the
``WMARK_CONFIG`` environment variable) with one section per subcommand;
command-line flags win over the file.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import zlib
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import baselines, evaluate, secrecy
from .codec import WatermarkBits, bits_to_text, random_bits, text_to_bits
from .dataio import (
    TimeSeriesDataset,
    gen_sine_mixture,
    gen_synthetic_load,
    gen_synthetic_pv,
    load_csv_dataset,
    save_csv_dataset,
)
from .errors import EncodingError, InvalidSpec, LengthError, WatermarkError
from .pipeline import WatermarkBundle, embed_dataset, extract_bits, fine_tune_bundle, train_bundle, verify_dataset
from .training import TrainConfig, fine_tune_config

CONFIG_ENV = "WMARK_CONFIG"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def sub_seed(root: int, name: str) -> int:
    """Deterministic per-component seed derived from the root seed."""
    return int(np.random.SeedSequence([root, zlib.crc32(name.encode())]).generate_state(1)[0])


def _floats(text: str) -> list[float]:
    return [float(t) for t in str(text).split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in str(text).split(",") if t.strip()]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _table(rows: list[dict]) -> None:
    if not rows:
        return
    keys = [k for k in rows[0] if not isinstance(rows[0][k], (dict, list))]
    print("\t".join(keys), file=sys.stderr)
    for r in rows:
        print("\t".join(f"{r[k]:.6g}" if isinstance(r[k], float) else str(r[k]) for k in keys), file=sys.stderr)


def _write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- shared flag groups ----------------------------------------------------------------


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int, default=d.epochs, help="training epochs")
    g.add_argument("--batch-size", type=int, default=d.batch_size, help="mini-batch size")
    g.add_argument("--learning-rate", type=float, default=d.learning_rate, help="Adam learning rate")
    g.add_argument("--noise-std", type=float, default=d.noise_std, help="noise-layer standard deviation")
    g.add_argument("--noise-domain", choices=("spectral", "time"), default=d.noise_domain, help="where the noise layer acts")
    g.add_argument("--lambda-max", type=float, default=d.lambda_max, help="final invisibility weight")
    g.add_argument("--accuracy-threshold", type=float, default=d.accuracy_threshold, help="accuracy that starts the lambda ramp")
    g.add_argument("--ramp-fraction", type=float, default=d.ramp_fraction, help="ramp length as a fraction of epochs")
    g.add_argument("--lr-schedule", choices=("constant", "cosine"), default=d.lr_schedule, help="learning-rate schedule")
    g.add_argument("--random-watermarks", type=_bool, default=d.random_watermarks, help="draw random training watermarks (true/false)")
    g.add_argument("--history", help="optional CSV path for the per-epoch training history")


def _train_config(args, seed_name: str) -> TrainConfig:
    return TrainConfig.from_mapping({**vars(args), "seed": sub_seed(args.seed, seed_name)})


def _add_watermark_flags(p: argparse.ArgumentParser, required: bool = True) -> None:
    g = p.add_mutually_exclusive_group(required=False)
    g.add_argument("--watermark-text", help="ASCII text, 8 bits per character")
    g.add_argument("--watermark-bits", help="explicit bit string such as 0110...")
    g.add_argument("--watermark-random", type=int, metavar="M", help="random watermark of M bits drawn from the root seed")
    p.set_defaults(_watermark_required=required)


def _watermark(args) -> WatermarkBits | None:
    if getattr(args, "watermark_text", None):
        return text_to_bits(args.watermark_text)
    if getattr(args, "watermark_bits", None):
        return WatermarkBits.from_string(args.watermark_bits)
    if getattr(args, "watermark_random", None):
        return random_bits(args.watermark_random, sub_seed(args.seed, "watermark"))
    if args._watermark_required:
        raise UsageError("one of --watermark-text, --watermark-bits or --watermark-random is required")
    return None


# -- subcommands -------------------------------------------------------------------------


def cmd_gen_data(args) -> dict:
    seed = sub_seed(args.seed, "gen-data")
    if args.kind == "load":
        ds = gen_synthetic_load(args.n, args.length, seed)
    elif args.kind == "pv":
        ds = gen_synthetic_pv(args.n, args.length, seed)
    else:
        comps = []
        for item in args.components.split(","):
            f, a = item.split(":")
            comps.append((float(f), float(a)))
        row = gen_sine_mixture(comps, args.length)
        ds = TimeSeriesDataset(np.tile(row, (args.n, 1)), "sine_mixture")
    save_csv_dataset(ds, args.out)
    return {"out": args.out, "kind": args.kind, "series_count": ds.series_count, "series_len": ds.series_len, "seed": seed}


def cmd_train(args) -> dict:
    ds = load_csv_dataset(args.data)
    w = _watermark(args)
    cfg = _train_config(args, "train")
    bundle, hist = train_bundle(ds, w, cfg, domain=args.domain, init_seed=sub_seed(args.seed, "init"))
    bundle.save(args.out)
    if args.history:
        hist.to_csv(args.history)
    _table([asdict(r) for r in hist.records[-5:]])
    _, acc = extract_bits(bundle, embed_dataset(bundle, ds))
    return {
        "out": args.out,
        "epochs": cfg.epochs,
        "m": len(w),
        "final_lambda": hist.records[-1].lam if hist.records else 0.0,
        "final_train_accuracy": hist.records[-1].accuracy if hist.records else None,
        "clean_accuracy": float(acc.mean()),
    }


def cmd_fine_tune(args) -> dict:
    bundle = WatermarkBundle.load(args.bundle)
    ds = load_csv_dataset(args.data)
    cfg = _train_config(args, "fine-tune")
    tuned, hist = fine_tune_bundle(bundle, ds, cfg, _watermark(args))
    tuned.save(args.out)
    if args.history:
        hist.to_csv(args.history)
    _, acc = extract_bits(tuned, embed_dataset(tuned, ds))
    return {"out": args.out, "epochs": cfg.epochs, "clean_accuracy": float(acc.mean())}


def cmd_embed(args) -> dict:
    bundle = WatermarkBundle.load(args.bundle)
    ds = load_csv_dataset(args.data)
    out = embed_dataset(bundle, ds)
    save_csv_dataset(out, args.out)
    return {"out": args.out, "series_count": out.series_count, "rmse": evaluate.rmse(ds, out)}


def cmd_extract(args) -> dict:
    bundle = WatermarkBundle.load(args.bundle)
    ds = load_csv_dataset(args.data)
    recovered, acc = extract_bits(bundle, ds)
    if args.out:
        Path(args.out).write_text("".join(f"{r}\n" for r in recovered), encoding="utf-8")
    summary = {"series_count": len(recovered), "mean_accuracy": float(acc.mean()), "first": str(recovered[0])}
    if len(recovered[0]) % 8 == 0:
        try:
            summary["first_text"] = bits_to_text(recovered[0])
        except (EncodingError, LengthError):
            summary["first_text"] = None
    if args.out:
        summary["out"] = args.out
    return summary


def cmd_verify(args) -> dict:
    bundle = WatermarkBundle.load(args.bundle)
    report = verify_dataset(bundle, load_csv_dataset(args.data), args.threshold)
    if args.report:
        Path(args.report).write_text(report.to_json() + "\n", encoding="utf-8")
    d = report.to_dict()
    d.pop("series")
    return d


def cmd_eval_invisibility(args) -> dict:
    a, b = load_csv_dataset(args.original), load_csv_dataset(args.modified)
    report = evaluate.invisibility_report(a, b).to_dict()
    report.pop("tags")
    if args.stats_csv:
        sa, sb = evaluate.series_statistics(a), evaluate.series_statistics(b)
        rows = [
            {"set": name, "index": i, "mean": float(s[0]), "peak": float(s[1])}
            for name, st in (("original", sa), ("modified", sb))
            for i, s in enumerate(st)
        ]
        evaluate.write_rows_csv(rows, args.stats_csv)
    if args.projection_csv:
        pa, pb = evaluate.pca_projection(a, b)
        rows = [
            {"set": name, "index": i, "pc1": float(p[0]), "pc2": float(p[1])}
            for name, pr in (("original", pa), ("modified", pb))
            for i, p in enumerate(pr)
        ]
        evaluate.write_rows_csv(rows, args.projection_csv)
    if args.out:
        _write_json(report, args.out)
    _table([report])
    return report


def cmd_eval_robustness(args) -> dict:
    bundle = WatermarkBundle.load(args.bundle)
    ds = load_csv_dataset(args.data)
    seed = sub_seed(args.seed, "eval-robustness")
    grid = [evaluate.PerturbationSpec("none", seed=seed)]
    grid += [
        evaluate.PerturbationSpec("gaussian_noise", noise_std=s, affected_fraction=f, seed=seed)
        for s in _floats(args.noise_stds)
        for f in _floats(args.fractions)
    ]
    grid += [evaluate.PerturbationSpec("missing_mask", missing_ratio=r, seed=seed) for r in _floats(args.missing_ratios)]
    rows = [asdict(r) for r in evaluate.robustness_sweep(bundle, ds, grid)]
    if args.out:
        evaluate.write_rows_csv(rows, args.out)
    _table(rows)
    return {"rows": [{k: v for k, v in r.items() if k != "spec"} for r in rows]}


def cmd_eval_capacity(args) -> dict:
    ds = load_csv_dataset(args.data)
    cfg = _train_config(args, "eval-capacity")
    rows = [asdict(r) for r in evaluate.capacity_sweep(ds, _ints(args.lengths), cfg, sub_seed(args.seed, "watermark"))]
    if args.out:
        evaluate.write_rows_csv(rows, args.out)
    _table(rows)
    return {"rows": rows}


def cmd_eval_fp(args) -> dict:
    bundle = WatermarkBundle.load(args.bundle)
    fp, tp = evaluate.false_positive_test(bundle, load_csv_dataset(args.original), load_csv_dataset(args.watermarked))
    result = {"false_positive_rate": fp, "true_positive_rate": tp}
    if args.out:
        _write_json(result, args.out)
    return result


def cmd_attack_ats(args) -> dict:
    disclosed = load_csv_dataset(args.data)
    bundle = WatermarkBundle.load(args.bundle) if args.bundle else None
    spec = secrecy.AttackerSpec(args.level, args.surrogates, sub_seed(args.seed, "attack-ats"))
    cfg = secrecy.AttackConfig(
        surrogate=TrainConfig(epochs=args.surrogate_epochs, lambda_max=args.lambda_max),
        classifier=secrecy.ClassifierConfig(epochs=args.classifier_epochs),
        domain=args.domain,
    )
    report = secrecy.ats_attack(spec, disclosed, bundle, cfg)
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    return report.to_dict()


def cmd_demo_freq_bias(args) -> dict:
    cfg = evaluate.FreqBiasConfig(args.length, args.hidden, args.epochs, args.learning_rate, sub_seed(args.seed, "demo"))
    rows = evaluate.freq_bias_demo(args.kind, cfg)
    if args.out:
        evaluate.write_rows_csv(rows, args.out)
    _table(rows)
    return {"kind": args.kind, "rows": rows}


def cmd_baseline(args) -> dict:
    ds = load_csv_dataset(args.data)
    if args.method == "lsb":
        cfg = baselines.LsbConfig(args.quant_step)
        embed, extract = baselines.lsb_embed, baselines.lsb_extract_all
    else:
        cfg = baselines.DwtConfig(args.level, args.alpha)
        embed, extract = baselines.dwt_embed, baselines.dwt_extract_all
    if args.action == "embed":
        out = embed(ds, _watermark(args), cfg)
        save_csv_dataset(out, args.out)
        return {"out": args.out, "method": args.method, "rmse": evaluate.rmse(ds, out)}
    w = _watermark(args)
    m = len(w) if w is not None else args.m
    if m is None:
        raise UsageError("extract needs --m or a reference watermark")
    recovered = extract(ds, m, cfg)
    if args.out:
        Path(args.out).write_text("".join(f"{r}\n" for r in recovered), encoding="utf-8")
    summary = {"method": args.method, "series_count": len(recovered), "first": str(recovered[0])}
    if w is not None:
        acc = evaluate.accuracies_against(w, recovered)
        summary.update(mean_accuracy=float(acc.mean()), success_rate=evaluate.success_rate(acc))
    return summary


# -- parser ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    root = _Parser(prog="freqmark", description="Blind frequency-domain watermarking for time-series datasets.")
    root.add_argument("--config", help=f"INI file with per-subcommand defaults (default: ${CONFIG_ENV})")
    root.add_argument("--seed", type=int, default=0, help="root seed; every component seed derives from it")
    subs = root.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = subs.add_parser("gen-data", help="write a synthetic dataset as CSV")
    p.add_argument("--kind", choices=("load", "pv", "sine"), default="load", help="generator")
    p.add_argument("--n", type=int, default=256, help="number of series")
    p.add_argument("--length", type=int, default=96, help="series length")
    p.add_argument("--components", default="1:1,5:1,10:1", help="sine components as freq:amp,... (kind=sine)")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_gen_data)

    p = subs.add_parser("train", help="train a watermark bundle on a dataset")
    p.add_argument("--data", required=True, help="training CSV, one series per row")
    p.add_argument("--out", required=True, help="bundle output path")
    p.add_argument("--domain", choices=("frequency", "time"), default="frequency", help="embedding domain")
    _add_watermark_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("fine-tune", help="adapt a trained bundle to a new dataset")
    p.add_argument("--bundle", required=True, help="pre-trained bundle")
    p.add_argument("--data", required=True, help="new training CSV")
    p.add_argument("--out", required=True, help="bundle output path")
    _add_watermark_flags(p, required=False)
    _add_train_flags(p)
    ft = fine_tune_config()
    p.set_defaults(func=cmd_fine_tune, epochs=ft.epochs, lr_schedule=ft.lr_schedule)

    p = subs.add_parser("embed", help="watermark a dataset with a bundle")
    p.add_argument("--bundle", required=True, help="trained bundle")
    p.add_argument("--data", required=True, help="input CSV")
    p.add_argument("--out", required=True, help="watermarked CSV")
    p.set_defaults(func=cmd_embed)

    p = subs.add_parser("extract", help="decode watermark bits from every series")
    p.add_argument("--bundle", required=True, help="trained bundle")
    p.add_argument("--data", required=True, help="suspect CSV")
    p.add_argument("--out", help="optional text file, one bit string per series")
    p.set_defaults(func=cmd_extract)

    p = subs.add_parser("verify", help="blind ownership verification")
    p.add_argument("--bundle", required=True, help="trained bundle")
    p.add_argument("--data", required=True, help="suspect CSV")
    p.add_argument("--threshold", type=float, default=0.75, help="per-series bit-accuracy threshold")
    p.add_argument("--report", help="optional JSON report with per-series results")
    p.set_defaults(func=cmd_verify)

    p = subs.add_parser("eval-invisibility", help="distortion metrics between two datasets")
    p.add_argument("--original", required=True, help="reference CSV")
    p.add_argument("--modified", required=True, help="modified CSV")
    p.add_argument("--out", help="optional JSON report")
    p.add_argument("--stats-csv", help="optional per-series mean/peak CSV")
    p.add_argument("--projection-csv", help="optional 2-D principal-component projection CSV")
    p.set_defaults(func=cmd_eval_invisibility)

    p = subs.add_parser("eval-robustness", help="bit accuracy under noise and missing data")
    p.add_argument("--bundle", required=True, help="trained bundle")
    p.add_argument("--data", required=True, help="watermarked CSV")
    p.add_argument("--noise-stds", default="0.001,0.01,0.05,0.1", help="comma-separated noise levels")
    p.add_argument("--fractions", default="1.0", help="comma-separated affected-series fractions")
    p.add_argument("--missing-ratios", default="0.05,0.1,0.15", help="comma-separated missing-point ratios")
    p.add_argument("--out", help="optional CSV")
    p.set_defaults(func=cmd_eval_robustness)

    p = subs.add_parser("eval-capacity", help="accuracy and FID across watermark lengths")
    p.add_argument("--data", required=True, help="training CSV")
    p.add_argument("--lengths", default="16,32,64,128", help="comma-separated watermark lengths")
    p.add_argument("--out", help="optional CSV")
    _add_train_flags(p)
    p.set_defaults(func=cmd_eval_capacity)

    p = subs.add_parser("eval-fp", help="false-positive and true-positive detection rates")
    p.add_argument("--bundle", required=True, help="trained bundle")
    p.add_argument("--original", required=True, help="unwatermarked CSV")
    p.add_argument("--watermarked", required=True, help="watermarked CSV")
    p.add_argument("--out", help="optional JSON")
    p.set_defaults(func=cmd_eval_fp)

    p = subs.add_parser("attack-ats", help="steganalysis with artificial training sets")
    p.add_argument("--level", choices=secrecy.LEVELS, default="weak", help="attacker knowledge")
    p.add_argument("--data", required=True, help="disclosed CSV")
    p.add_argument("--bundle", help="owner bundle (required for moderate and strong)")
    p.add_argument("--surrogates", type=int, default=5, help="surrogate watermarkers used for training sets")
    p.add_argument("--surrogate-epochs", type=int, default=20, help="training epochs per surrogate")
    p.add_argument("--lambda-max", type=float, default=TrainConfig().lambda_max, help="surrogate invisibility weight")
    p.add_argument("--classifier-epochs", type=int, default=200, help="linear classifier epochs")
    p.add_argument("--domain", choices=("frequency", "time"), default="frequency", help="surrogate embedding domain")
    p.add_argument("--out", help="optional JSON report")
    p.set_defaults(func=cmd_attack_ats)

    p = subs.add_parser("demo-freq-bias", help="fit sine mixtures and report per-frequency error")
    p.add_argument("--kind", choices=("frequency", "amplitude"), default="frequency", help="experiment")
    p.add_argument("--epochs", type=int, default=evaluate.FreqBiasConfig.epochs, help="training epochs")
    p.add_argument("--hidden", type=int, default=evaluate.FreqBiasConfig.hidden, help="hidden units")
    p.add_argument("--length", type=int, default=evaluate.FreqBiasConfig.length, help="samples per window")
    p.add_argument("--learning-rate", type=float, default=evaluate.FreqBiasConfig.learning_rate, help="Adam learning rate")
    p.add_argument("--out", help="optional CSV")
    p.set_defaults(func=cmd_demo_freq_bias)

    p = subs.add_parser("baseline", help="LSB or DWT watermarking")
    p.add_argument("--method", choices=("lsb", "dwt"), required=True, help="baseline scheme")
    p.add_argument("--action", choices=("embed", "extract"), required=True, help="operation")
    p.add_argument("--data", required=True, help="input CSV")
    p.add_argument("--out", help="output CSV (embed) or bit strings (extract)")
    p.add_argument("--m", type=int, help="bits to extract when no reference watermark is given")
    p.add_argument("--quant-step", type=float, default=baselines.LsbConfig.quant_step, help="LSB quantisation step")
    p.add_argument("--level", type=int, default=baselines.DwtConfig.level, help="Haar decomposition level")
    p.add_argument("--alpha", type=float, default=baselines.DwtConfig.alpha, help="QIM lattice step")
    _add_watermark_flags(p, required=False)
    p.set_defaults(func=cmd_baseline)

    root._subparsers_map = subs.choices
    return root


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return
    cp = configparser.ConfigParser()
    if not cp.read(path, encoding="utf-8"):
        raise UsageError(f"config file not found: {path}")
    if cp.has_section("global") and cp.has_option("global", "seed"):
        parser.set_defaults(seed=cp.getint("global", "seed"))
    for name, sub in parser._subparsers_map.items():
        if not cp.has_section(name):
            continue
        known = {a.dest: a for a in sub._actions}
        values = {}
        for key, raw in cp.items(name):
            dest = key.replace("-", "_")
            if dest not in known or dest in ("help", "func"):
                raise UsageError(f"unknown key {key!r} in section [{name}]")
            action = known[dest]
            values[dest] = action.type(raw) if action.type else raw
        sub.set_defaults(**values)


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            raise UsageError("a subcommand is required")
        summary = args.func(args)
    except UsageError as exc:
        print(json.dumps({"status": "usage_error", "message": str(exc)}))
        return 1
    except (WatermarkError, OSError, ValueError) as exc:
        print(json.dumps({"status": "error", "error": type(exc).__name__, "message": str(exc)}))
        return 2
    print(json.dumps({"status": "ok", "command": args.command, **summary}, sort_keys=True, default=_json_default))
    return 0


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
