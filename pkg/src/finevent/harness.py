"""Training, evaluation, metrics and reporting.

Temporal splits put the newest samples in dev/test; scalers and vocabularies
come from the training slice only.  SSPM trains on every sample (uncovered
ones carry S/P/O labels); MSSPM trains on the dictionary-covered slice so its
distant labels are fine-grained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .market import BUCKETS, MovementSample, fit_minmax_scaler
from .models import ModelBundle, ModelConfig, build_vocab, ensemble_predict, extractor_param_names, msspm_event_loss, multitask_loss
from .nn import AdamState, adam_step, backward, no_grad


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainSettings:
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 5
    lr: float = 0.001
    decay: float = 0.0005
    vocab_size: int = 5000


def paper_scale_settings() -> tuple[ModelConfig, TrainSettings]:
    """Full-size hyperparameters: hidden 256, 3 BiLSTM layers, batch 128,
    vocab 50000, 60 epochs."""
    cfg = ModelConfig(h=256, d_w=812, lstm_layers=3)
    hyper = TrainSettings(batch_size=128, max_epochs=60, vocab_size=50_000)
    return cfg, hyper


def mcc(tp: int, tn: int, fp: int, fn: int) -> float:
    """Matthews correlation; 0 whenever a denominator factor vanishes."""
    if min(tp, tn, fp, fn) < 0:
        raise ValueError("confusion counts must be non-negative")
    denom_sq = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom_sq == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom_sq)


def micro_f1(pred_seqs: list[tuple[int, ...]], gold_seqs: list[tuple[int, ...]]) -> float:
    """Token-level micro F1 over non-O labels (O is id 0); 0 when nothing is
    predicted or nothing is gold."""
    correct = pred_n = gold_n = 0
    for pred, gold in zip(pred_seqs, gold_seqs):
        for p, g in zip(pred, gold):
            if p != 0:
                pred_n += 1
            if g != 0:
                gold_n += 1
            if p == g and g != 0:
                correct += 1
    if pred_n == 0 or gold_n == 0:
        return 0.0
    precision = correct / pred_n
    recall = correct / gold_n
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def split_temporal(
    samples: list[MovementSample], dev_n: int, test_n: int
) -> tuple[list[MovementSample], list[MovementSample], list[MovementSample]]:
    """Time-ordered split: the last test_n samples test, the dev_n before
    them dev, the rest train.  Timestamp ties break on doc_id."""
    if dev_n + test_n >= len(samples):
        raise ValueError("dev_n + test_n must leave at least one training sample")
    ordered = sorted(samples, key=lambda s: (s.news.timestamp, s.news.doc_id))
    train = ordered[: len(ordered) - dev_n - test_n]
    dev = ordered[len(train) : len(train) + dev_n]
    test = ordered[len(train) + dev_n :]
    return train, dev, test


@dataclass
class Metrics:
    n: int
    accuracy: float
    mcc: float
    micro_f1: float | None = None
    per_bucket: dict[str, dict] = field(default_factory=dict)
    per_coverage: dict[str, dict] = field(default_factory=dict)


def _group_metrics(pairs: list[tuple[int, int]]) -> dict:
    if not pairs:
        return {"n": 0, "accuracy": 0.0, "mcc": 0.0}
    tp = sum(1 for p, g in pairs if p == 1 and g == 1)
    tn = sum(1 for p, g in pairs if p == 0 and g == 0)
    fp = sum(1 for p, g in pairs if p == 1 and g == 0)
    fn = sum(1 for p, g in pairs if p == 0 and g == 1)
    return {
        "n": len(pairs),
        "accuracy": (tp + tn) / len(pairs),
        "mcc": mcc(tp, tn, fp, fn),
    }


def _metrics_from_predictions(
    preds: list[int],
    samples: list[MovementSample],
    f1: float | None = None,
) -> Metrics:
    pairs = list(zip(preds, [s.label for s in samples]))
    overall = _group_metrics(pairs)
    per_bucket = {}
    for bucket in BUCKETS:
        sub = [(p, s.label) for p, s in zip(preds, samples) if s.time_bucket == bucket]
        per_bucket[bucket] = _group_metrics(sub)
    per_coverage = {}
    for name, flag in (("covered", True), ("uncovered", False)):
        sub = [(p, s.label) for p, s in zip(preds, samples) if s.roles.covered == flag]
        per_coverage[name] = _group_metrics(sub)
    return Metrics(
        n=overall["n"],
        accuracy=overall["accuracy"],
        mcc=overall["mcc"],
        micro_f1=f1,
        per_bucket=per_bucket,
        per_coverage=per_coverage,
    )


def evaluate(bundle: ModelBundle, samples: list[MovementSample]) -> Metrics:
    """Movement accuracy/MCC (plus labeling micro-F1 over covered samples for
    MSSPM); side-effect free."""
    preds: list[int] = []
    pred_seqs: list[tuple[int, ...]] = []
    gold_seqs: list[tuple[int, ...]] = []
    with no_grad():
        for sample in samples:
            out = bundle.forward_sample(sample, train=False)
            if bundle.kind == "sspm":
                probs = out[0].data
            else:
                probs = out.probs.data
                if sample.roles.covered:
                    pred_seqs.append(tuple(out.pred_labels))
                    gold_seqs.append(tuple(sample.roles.labels))
            preds.append(int(probs.argmax()))
    f1 = micro_f1(pred_seqs, gold_seqs) if bundle.kind == "msspm" else None
    return _metrics_from_predictions(preds, samples, f1)


def evaluate_ensemble(
    sspm: ModelBundle, msspm: ModelBundle, samples: list[MovementSample]
) -> Metrics:
    preds = []
    with no_grad():
        for sample in samples:
            probs = ensemble_predict(sample, sspm, msspm)
            preds.append(int(probs.argmax()))
    return _metrics_from_predictions(preds, samples)


# ---------------------------------------------------------------------------
# Training


def _sample_loss(bundle: ModelBundle, sample: MovementSample, train: bool, rng):
    """(loss, predicted_class) for one sample under the bundle's kind."""
    if bundle.kind == "sspm":
        probs, logits = bundle.forward_sample(sample, train, rng)
        return nn.cross_entropy(logits, sample.label), int(probs.data.argmax())
    out = bundle.forward_sample(sample, train, rng)
    gold = np.asarray(sample.roles.labels, dtype=np.intp)
    ev = msspm_event_loss(out.emissions, gold, bundle.store, bundle.cfg)
    st = nn.cross_entropy(out.logits, sample.label)
    loss = multitask_loss(ev, st, bundle.cfg.lam, len(gold))
    return loss, int(out.probs.data.argmax())


def _epoch_pass(
    bundle: ModelBundle,
    samples: list[MovementSample],
    adam: AdamState,
    batch_size: int,
    shuffle_rng: np.random.Generator,
    dropout_rng: np.random.Generator,
) -> tuple[float, float]:
    order = np.arange(len(samples))
    shuffle_rng.shuffle(order)
    total_loss = 0.0
    correct = 0
    for lo in range(0, len(order), batch_size):
        batch = order[lo : lo + batch_size]
        for i in batch:
            loss, pred = _sample_loss(bundle, samples[int(i)], True, dropout_rng)
            total_loss += loss.item()
            correct += int(pred == samples[int(i)].label)
            backward(nn.scale(loss, 1.0 / len(batch)))
        adam_step(bundle.store, adam)
    return total_loss / len(samples), correct / len(samples)


def train(
    kind: str,
    train_samples: list[MovementSample],
    dev_samples: list[MovementSample],
    label_alphabet: list[str],
    cfg: ModelConfig,
    hyper: TrainSettings,
    word_vectors: dict | None = None,
    pipeline: bool = False,
) -> tuple[ModelBundle, list[dict]]:
    """Mini-batch Adam with seeded shuffling and dev-accuracy early stopping;
    returns the best-dev bundle and the per-epoch history.

    ``pipeline`` (MSSPM only) first fits the extractor alone, freezes it, and
    then trains the prediction side; the default trains both jointly.
    """
    if kind == "msspm":
        fit_samples = [s for s in train_samples if s.roles.covered]
        if not fit_samples:
            raise TrainingError("MSSPM needs dictionary-covered training samples")
    else:
        fit_samples = list(train_samples)
    if not fit_samples:
        raise TrainingError("empty training split")

    vocab = build_vocab((s.news.tokens for s in fit_samples), hyper.vocab_size)
    windows_by_stock: dict[str, list[np.ndarray]] = {}
    for s in fit_samples:
        windows_by_stock.setdefault(s.news.stock_id, []).append(s.window.data)
    scaler = fit_minmax_scaler(windows_by_stock)
    bundle = ModelBundle.create(kind, cfg, vocab, list(label_alphabet), scaler)
    if word_vectors and "word_emb" in bundle.store:
        nn.apply_word_vectors(bundle.store["word_emb"], vocab, word_vectors)

    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_rng = np.random.default_rng(seeds[0])
    dropout_rng = np.random.default_rng(seeds[1])

    history: list[dict] = []
    if pipeline:
        if kind != "msspm":
            raise TrainingError("pipeline training only applies to MSSPM")
        history += _fit(bundle, fit_samples, dev_samples, hyper, shuffle_rng,
                        dropout_rng, stage="extractor")
        frozen = extractor_param_names(bundle.store)
        history += _fit(bundle, fit_samples, dev_samples, hyper, shuffle_rng,
                        dropout_rng, stage="predictor", frozen=frozen)
    else:
        history += _fit(bundle, fit_samples, dev_samples, hyper, shuffle_rng,
                        dropout_rng, stage="joint")
    return bundle, history


def _fit(
    bundle: ModelBundle,
    fit_samples: list[MovementSample],
    dev_samples: list[MovementSample],
    hyper: TrainSettings,
    shuffle_rng: np.random.Generator,
    dropout_rng: np.random.Generator,
    stage: str,
    frozen: set[str] | None = None,
) -> list[dict]:
    adam = AdamState(lr=hyper.lr, decay=hyper.decay, frozen=frozen or set())
    history: list[dict] = []
    best_score = -np.inf
    best_params = bundle.store.snapshot()
    since_best = 0
    saved_cfg = bundle.cfg
    # Pipeline stages reweight the multi-task loss: the extractor stage runs
    # the event loss alone, the predictor stage the movement loss alone.
    if stage == "extractor":
        bundle.cfg = replace(saved_cfg, lam=1.0)
    elif stage == "predictor":
        bundle.cfg = replace(saved_cfg, lam=0.0)
    try:
        for epoch in range(1, hyper.max_epochs + 1):
            train_loss, train_acc = _epoch_pass(
                bundle, fit_samples, adam, hyper.batch_size, shuffle_rng, dropout_rng
            )
            dev_metrics = evaluate(bundle, dev_samples)
            row = {
                "stage": stage,
                "epoch": epoch,
                "train_loss": train_loss,
                "train_acc": train_acc,
                "dev_acc": dev_metrics.accuracy,
                "dev_mcc": dev_metrics.mcc,
            }
            if dev_metrics.micro_f1 is not None:
                row["dev_micro_f1"] = dev_metrics.micro_f1
            history.append(row)
            score = (
                dev_metrics.micro_f1
                if stage == "extractor" and dev_metrics.micro_f1 is not None
                else dev_metrics.accuracy
            )
            if score > best_score:
                best_score = score
                best_params = bundle.store.snapshot()
                since_best = 0
            else:
                since_best += 1
                if since_best >= hyper.patience:
                    break
    except nn.NonFiniteError as exc:
        raise TrainingError(f"training diverged at {stage} epoch {len(history) + 1}: {exc}") from exc
    finally:
        bundle.cfg = saved_cfg
    bundle.store.load_values(best_params)
    return history


# ---------------------------------------------------------------------------
# Reports


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def report(history: list[dict], metrics: dict[str, Metrics], fmt: str = "text") -> str:
    """Overall, per-bucket, and covered/uncovered tables plus the training
    history; CSV output is byte-stable for identical inputs."""
    lines: list[str] = []
    sep = "," if fmt == "csv" else "  "

    lines.append(sep.join(["model", "n", "accuracy", "mcc", "micro_f1"]))
    for name in sorted(metrics):
        m = metrics[name]
        lines.append(sep.join([
            name, str(m.n), _fmt(m.accuracy), _fmt(m.mcc),
            _fmt(m.micro_f1) if m.micro_f1 is not None else "-",
        ]))
    lines.append("")

    lines.append(sep.join(["model", "bucket", "n", "accuracy", "mcc"]))
    for name in sorted(metrics):
        for bucket in BUCKETS:
            g = metrics[name].per_bucket.get(bucket, {"n": 0, "accuracy": 0.0, "mcc": 0.0})
            lines.append(sep.join([name, bucket, str(g["n"]), _fmt(g["accuracy"]), _fmt(g["mcc"])]))
    lines.append("")

    lines.append(sep.join(["model", "subset", "n", "accuracy", "mcc"]))
    for name in sorted(metrics):
        for subset in ("covered", "uncovered"):
            g = metrics[name].per_coverage.get(subset, {"n": 0, "accuracy": 0.0, "mcc": 0.0})
            lines.append(sep.join([name, subset, str(g["n"]), _fmt(g["accuracy"]), _fmt(g["mcc"])]))
    lines.append("")

    if history:
        cols = ["stage", "epoch", "train_loss", "train_acc", "dev_acc", "dev_mcc", "dev_micro_f1"]
        lines.append(sep.join(cols))
        for row in history:
            lines.append(sep.join(
                _fmt(row[c]) if isinstance(row.get(c), float) else str(row.get(c, "-"))
                for c in cols
            ))
    return "\n".join(lines) + "\n"


def history_to_csv(history: list[dict]) -> str:
    cols = ["stage", "epoch", "train_loss", "train_acc", "dev_acc", "dev_mcc", "dev_micro_f1"]
    out = [",".join(cols)]
    for row in history:
        out.append(",".join(
            _fmt(row[c]) if isinstance(row.get(c), float) else str(row.get(c, "-"))
            for c in cols
        ))
    return "\n".join(out) + "\n"
