"""Command-line interface.

Exit codes: 0 success, 1 validation failure (bad dictionary/corpus/config),
2 unexpected runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from datetime import date

from .corpus import CorpusError, parse_corpus
from .dictionary import DictionaryError, load_dictionary, validate_dictionary
from .extraction import extract_detailed
from .harness import (
    Metrics,
    TrainSettings,
    evaluate,
    evaluate_ensemble,
    history_to_csv,
    mcc,
    paper_scale_settings,
    report,
    split_temporal,
    train,
)
from .market import (
    MarketDataError,
    build_minute_features,
    load_bars,
    load_calendar,
    load_index_values,
    load_sector_map,
    movement_label,
    time_bucket,
    window_trade_data,
)
from .models import ModelBundle, ModelConfig
from .nn import load_word_vectors
from .synth import DEFAULT_DICTIONARY, SynthConfig, generate, load_dataset, save_dataset


class CliError(ValueError):
    """User-input problem; maps to exit code 1."""


def _load_dict(path: str):
    try:
        with open(path, encoding="utf-8") as f:
            return load_dictionary(f)
    except FileNotFoundError:
        raise CliError(f"dictionary file not found: {path}") from None
    except DictionaryError as exc:
        raise CliError(f"invalid dictionary: {exc}") from None


def _load_corpus(path: str):
    try:
        with open(path, encoding="utf-8") as f:
            return parse_corpus(f)
    except FileNotFoundError:
        raise CliError(f"corpus file not found: {path}") from None
    except CorpusError as exc:
        raise CliError(f"invalid corpus: {exc}") from None


def _write(out_path: str | None, text: str) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def cmd_validate_dict(args) -> int:
    try:
        with open(args.dict, encoding="utf-8") as f:
            d = load_dictionary(f)
    except FileNotFoundError:
        print(f"dictionary file not found: {args.dict}", file=sys.stderr)
        return 1
    except DictionaryError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 1
    issues = validate_dictionary(d)
    if issues:
        for issue in issues:
            print(issue)
        return 1
    print(f"ok: {len(d.types)} event types, {len(d.label_alphabet)} labels")
    return 0


def cmd_extract(args) -> int:
    d = _load_dict(args.dict)
    records = _load_corpus(args.corpus)
    lines = []
    covered_n = 0
    for news in records:
        seq = extract_detailed(news, d).sequence
        covered_n += int(seq.covered)
        labels = " ".join(seq.as_strings(d))
        lines.append(f"{news.doc_id}\t{int(seq.covered)}\t{labels}")
    _write(args.out, "\n".join(lines) + "\n")
    if args.stats:
        frac = covered_n / len(records) if records else 0.0
        print(f"coverage\t{frac:.6f}")
    return 0


def cmd_featurize(args) -> int:
    try:
        bars = load_bars(args.bars)
    except (FileNotFoundError, MarketDataError, KeyError, ValueError) as exc:
        raise CliError(f"bad bars file: {exc}") from None
    rows = ["stock,date,step," + ",".join(f"f{i}" for i in range(120))]
    for (stock, day) in sorted(bars):
        if args.stock and stock != args.stock:
            continue
        if args.date and day.isoformat() != args.date:
            continue
        matrix = window_trade_data(build_minute_features(bars[(stock, day)]))
        for step in range(matrix.shape[0]):
            vals = ",".join(f"{v:.6f}" for v in matrix[step])
            rows.append(f"{stock},{day.isoformat()},{step},{vals}")
    _write(args.out, "\n".join(rows) + "\n")
    return 0


def cmd_label(args) -> int:
    records = _load_corpus(args.corpus)
    try:
        bars = load_bars(args.bars)
        index_values = load_index_values(args.index)
        sector_map = load_sector_map(args.sectors)
        calendar = load_calendar(args.calendar)
    except (FileNotFoundError, MarketDataError, KeyError, ValueError) as exc:
        raise CliError(f"bad market data: {exc}") from None
    by_stock: dict[str, dict[date, list]] = {}
    for (stock, day), b in bars.items():
        by_stock.setdefault(stock, {})[day] = b
    by_sector: dict[str, dict[date, list]] = {}
    for (sector, day), v in index_values.items():
        by_sector.setdefault(sector, {})[day] = v
    rows = ["doc_id,stock,time,bucket,label,final_return"]
    for news in records:
        sector = sector_map.get(news.stock_id)
        if sector is None:
            raise CliError(f"stock {news.stock_id} missing from the sector map")
        try:
            label, r_f = movement_label(
                by_stock.get(news.stock_id, {}), by_sector.get(sector, {}),
                news.timestamp, calendar,
            )
        except MarketDataError as exc:
            raise CliError(f"record {news.doc_id}: {exc}") from None
        bucket = time_bucket(news.timestamp, calendar)
        rows.append(
            f"{news.doc_id},{news.stock_id},{news.timestamp.strftime('%Y-%m-%d %H:%M')},"
            f"{bucket},{label},{r_f:.8f}"
        )
    _write(args.out, "\n".join(rows) + "\n")
    return 0


def cmd_synth(args) -> int:
    d = _load_dict(args.dict) if args.dict else None
    cfg = SynthConfig(
        n_samples=args.n,
        p_covered=args.p_covered,
        p_signal=args.p_signal,
        n_distractors=args.distractors,
        seed=args.seed,
    )
    ds = generate(cfg, d)
    save_dataset(ds, args.out)
    covered = sum(1 for g in ds.gold if g.covered)
    print(f"wrote {len(ds.news)} samples ({covered} covered) to {args.out}")
    return 0


def _splits(args, samples):
    dev_n = args.dev_n if args.dev_n else max(1, len(samples) // 10)
    test_n = args.test_n if args.test_n else max(1, len(samples) // 10)
    return split_temporal(samples, dev_n, test_n)


def cmd_train(args) -> int:
    ds = load_dataset(args.data)
    tr, dev, _ = _splits(args, ds.samples)
    if args.paper_scale:
        cfg, hyper = paper_scale_settings()
        cfg = replace(cfg, seed=args.seed, input_form=args.input_form,
                      ablations=frozenset(args.ablate), lam=getattr(args, "lambda"))
    else:
        cfg = ModelConfig(
            h=args.h,
            input_form=args.input_form,
            ablations=frozenset(args.ablate),
            lam=getattr(args, "lambda"),
            seed=args.seed,
            dropout_p=args.dropout,
        )
        hyper = TrainSettings(batch_size=args.batch_size, max_epochs=args.epochs,
                              patience=args.patience)
    vectors = load_word_vectors(args.word_vectors) if args.word_vectors else None
    try:
        bundle, history = train(
            args.model, tr, dev, list(ds.dictionary.label_alphabet), cfg, hyper,
            word_vectors=vectors, pipeline=args.pipeline,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None
    bundle.save(args.out)
    if args.history:
        _write(args.history, history_to_csv(history))
    last = history[-1] if history else {}
    print(f"saved {args.model} checkpoint to {args.out} "
          f"({len(history)} epochs, dev_acc={last.get('dev_acc', 0.0):.4f})")
    return 0


def _metrics_json(m: Metrics) -> dict:
    return {
        "n": m.n,
        "accuracy": m.accuracy,
        "mcc": m.mcc,
        "micro_f1": m.micro_f1,
        "per_bucket": m.per_bucket,
        "per_coverage": m.per_coverage,
    }


def cmd_eval(args) -> int:
    ds = load_dataset(args.data)
    tr, dev, test = _splits(args, ds.samples)
    split = {"train": tr, "dev": dev, "test": test, "all": ds.samples}[args.split]
    bundle = ModelBundle.load(args.ckpt)
    m = evaluate(bundle, split)
    if args.json:
        print(json.dumps(_metrics_json(m), sort_keys=True))
    else:
        print(report([], {bundle.kind: m}, fmt="text"), end="")
    return 0


def cmd_ensemble_eval(args) -> int:
    ds = load_dataset(args.data)
    tr, dev, test = _splits(args, ds.samples)
    split = {"train": tr, "dev": dev, "test": test, "all": ds.samples}[args.split]
    sspm = ModelBundle.load(args.sspm)
    msspm = ModelBundle.load(args.msspm)
    try:
        m = evaluate_ensemble(sspm, msspm, split)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    if args.json:
        print(json.dumps(_metrics_json(m), sort_keys=True))
    else:
        print(report([], {"ensemble": m}, fmt="text"), end="")
    return 0


def cmd_report(args) -> int:
    ds = load_dataset(args.data)
    tr, dev, test = _splits(args, ds.samples)
    split = {"train": tr, "dev": dev, "test": test, "all": ds.samples}[args.split]
    metrics: dict[str, Metrics] = {}
    if args.sspm:
        metrics["sspm"] = evaluate(ModelBundle.load(args.sspm), split)
    if args.msspm:
        metrics["msspm"] = evaluate(ModelBundle.load(args.msspm), split)
    if args.sspm and args.msspm:
        metrics["ensemble"] = evaluate_ensemble(
            ModelBundle.load(args.sspm), ModelBundle.load(args.msspm), split
        )
    if not metrics:
        raise CliError("report needs at least one checkpoint (--sspm/--msspm)")
    history = []
    if args.history:
        with open(args.history, encoding="utf-8") as f:
            lines = [ln.rstrip("\n") for ln in f if ln.strip()]
        cols = lines[0].split(",")
        for ln in lines[1:]:
            history.append(dict(zip(cols, ln.split(","))))
    _write(args.out, report(history, metrics, fmt=args.format))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(
        dictionary_path=args.dict,
        sspm_path=args.sspm,
        msspm_path=args.msspm,
    )
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="finevent",
                                description="Finance event extraction and stock movement prediction")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("validate-dict", help="check a dictionary file")
    sp.add_argument("--dict", required=True)
    sp.set_defaults(func=cmd_validate_dict)

    sp = sub.add_parser("extract", help="run event extraction over a corpus")
    sp.add_argument("--dict", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out")
    sp.add_argument("--stats", action="store_true", help="print the coverage fraction")
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("featurize", help="minute bars -> windowed feature matrices")
    sp.add_argument("--bars", required=True)
    sp.add_argument("--stock")
    sp.add_argument("--date")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_featurize)

    sp = sub.add_parser("label", help="sector-corrected movement labels for news")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--bars", required=True)
    sp.add_argument("--index", required=True)
    sp.add_argument("--sectors", required=True)
    sp.add_argument("--calendar", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_label)

    sp = sub.add_parser("synth", help="generate a synthetic dataset directory")
    sp.add_argument("--out", required=True)
    sp.add_argument("--n", type=int, default=500)
    sp.add_argument("--p-covered", type=float, default=0.7)
    sp.add_argument("--p-signal", type=float, default=1.0)
    sp.add_argument("--distractors", type=int, default=0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--dict", help=f"dictionary file (default: {DEFAULT_DICTIONARY})")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train a predictor on a dataset directory")
    sp.add_argument("--data", required=True)
    sp.add_argument("--model", choices=["sspm", "msspm"], required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--history", help="write per-epoch history CSV here")
    sp.add_argument("--input-form", default="fine",
                    choices=["no_text", "no_event", "coarse", "fine"])
    sp.add_argument("--ablate", default=[], type=lambda s: s.split(",") if s else [],
                    help="comma-separated: fusion_off,self_attn_off,co_attn_off,gated_sum_off,crf_off")
    sp.add_argument("--lambda", type=float, default=0.43, dest="lambda")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--paper-scale", action="store_true")
    sp.add_argument("--pipeline", action="store_true",
                    help="train the extractor first, then freeze it (MSSPM)")
    sp.add_argument("--h", type=int, default=32)
    sp.add_argument("--dropout", type=float, default=0.2)
    sp.add_argument("--epochs", type=int, default=30)
    sp.add_argument("--batch-size", type=int, default=32)
    sp.add_argument("--patience", type=int, default=5)
    sp.add_argument("--dev-n", type=int, default=0)
    sp.add_argument("--test-n", type=int, default=0)
    sp.add_argument("--word-vectors", help="optional word-vector text file")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--split", default="test", choices=["train", "dev", "test", "all"])
    sp.add_argument("--dev-n", type=int, default=0)
    sp.add_argument("--test-n", type=int, default=0)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ensemble-eval", help="route covered->SSPM, uncovered->MSSPM")
    sp.add_argument("--sspm", required=True)
    sp.add_argument("--msspm", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--split", default="test", choices=["train", "dev", "test", "all"])
    sp.add_argument("--dev-n", type=int, default=0)
    sp.add_argument("--test-n", type=int, default=0)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_ensemble_eval)

    sp = sub.add_parser("report", help="full evaluation report (overall/buckets/coverage)")
    sp.add_argument("--data", required=True)
    sp.add_argument("--sspm")
    sp.add_argument("--msspm")
    sp.add_argument("--history")
    sp.add_argument("--split", default="test", choices=["train", "dev", "test", "all"])
    sp.add_argument("--dev-n", type=int, default=0)
    sp.add_argument("--test-n", type=int, default=0)
    sp.add_argument("--format", default="text", choices=["text", "csv"])
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("serve", help="run the HTTP service")
    sp.add_argument("--dict", default=DEFAULT_DICTIONARY)
    sp.add_argument("--sspm")
    sp.add_argument("--msspm")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    sp.set_defaults(func=cmd_serve)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
