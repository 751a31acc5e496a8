import math

import numpy as np
import pytest

from finevent.harness import (
    Metrics,
    TrainSettings,
    _metrics_from_predictions,
    evaluate,
    evaluate_ensemble,
    history_to_csv,
    mcc,
    micro_f1,
    paper_scale_settings,
    report,
    split_temporal,
    train,
)
from finevent.models import ModelConfig
from finevent.synth import SynthConfig, generate


class TestMcc:
    def test_perfect_prediction(self):
        assert mcc(5, 7, 0, 0) == 1.0

    def test_hand_value(self):
        assert mcc(3, 4, 1, 2) == pytest.approx(10 / math.sqrt(600), abs=1e-12)

    def test_degenerate_zero(self):
        assert mcc(10, 0, 5, 0) == 0.0  # all predicted positive
        assert mcc(0, 10, 0, 5) == 0.0

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            mcc(-1, 0, 0, 0)

    def test_against_direct_formula_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            tp, tn, fp, fn = (int(x) for x in rng.integers(0, 500, size=4))
            got = mcc(tp, tn, fp, fn)
            denom = math.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
            want = 0.0 if denom == 0 else (tp * tn - fp * fn) / denom
            assert abs(got - want) <= 1e-12
            assert -1.0 <= got <= 1.0


class TestMicroF1:
    def test_gold_vs_gold_is_one(self):
        seqs = [(0, 1, 2, 0), (3, 0, 0, 4)]
        assert micro_f1(seqs, seqs) == 1.0

    def test_all_o_predictions_give_zero(self):
        assert micro_f1([(0, 0, 0)], [(0, 1, 2)]) == 0.0

    def test_counts(self):
        pred = [(1, 2, 0, 0)]
        gold = [(1, 0, 3, 0)]
        # correct=1, pred_n=2, gold_n=2 -> P=R=0.5 -> F1=0.5
        assert micro_f1(pred, gold) == pytest.approx(0.5)


class TestSplitTemporal:
    def test_sizes_and_ordering(self):
        ds = generate(SynthConfig(n_samples=100, seed=2))
        tr, dev, test = split_temporal(ds.samples, 10, 10)
        assert (len(tr), len(dev), len(test)) == (80, 10, 10)
        assert max(s.news.timestamp for s in tr) <= min(s.news.timestamp for s in dev)
        assert max(s.news.timestamp for s in dev) <= min(s.news.timestamp for s in test)
        ids = {s.news.doc_id for s in tr} | {s.news.doc_id for s in dev} | {s.news.doc_id for s in test}
        assert len(ids) == 100

    def test_insufficient_samples_rejected(self):
        ds = generate(SynthConfig(n_samples=10, seed=2))
        with pytest.raises(ValueError):
            split_temporal(ds.samples, 5, 5)

    def test_deterministic_tie_break(self):
        ds = generate(SynthConfig(n_samples=30, seed=2))
        a = split_temporal(ds.samples, 3, 3)
        b = split_temporal(list(reversed(ds.samples)), 3, 3)
        assert [s.news.doc_id for s in a[2]] == [s.news.doc_id for s in b[2]]


class TestMetricsAndReport:
    def test_perfect_predictions(self):
        ds = generate(SynthConfig(n_samples=20, seed=4))
        preds = [s.label for s in ds.samples]
        m = _metrics_from_predictions(preds, ds.samples)
        assert m.accuracy == 1.0
        assert m.mcc == 1.0

    def test_bucket_counts_partition(self):
        ds = generate(SynthConfig(n_samples=60, seed=4))
        preds = [0] * 60
        m = _metrics_from_predictions(preds, ds.samples)
        assert sum(g["n"] for g in m.per_bucket.values()) == 60
        assert sum(g["n"] for g in m.per_coverage.values()) == 60

    def test_report_structure(self):
        metrics = {"sspm": Metrics(n=4, accuracy=0.75, mcc=0.5, micro_f1=None,
                                   per_bucket={}, per_coverage={})}
        text = report([], metrics, fmt="text")
        assert "covered" in text and "uncovered" in text
        assert "trade_time" in text and "out_of_trade_day" in text

    def test_report_csv_bit_stable(self):
        ds = generate(SynthConfig(n_samples=20, seed=4))
        preds = [s.label for s in ds.samples]
        m = _metrics_from_predictions(preds, ds.samples)
        hist = [{"stage": "joint", "epoch": 1, "train_loss": 0.5, "train_acc": 0.9,
                 "dev_acc": 0.8, "dev_mcc": 0.4}]
        a = report(hist, {"sspm": m}, fmt="csv")
        b = report(hist, {"sspm": m}, fmt="csv")
        assert a == b
        assert a.startswith("model,n,accuracy,mcc,micro_f1")

    def test_empty_split_report_well_formed(self):
        m = _metrics_from_predictions([], [])
        out = report([], {"sspm": m}, fmt="csv")
        assert "sspm,0," in out


def tiny_dataset(n=24, seed=11, **kw):
    return generate(SynthConfig(n_samples=n, seed=seed, session_minutes=30, **kw))


class TestTraining:
    def test_overfits_two_samples(self):
        ds = tiny_dataset(n=12)
        two = ds.samples[:2]
        if two[0].label == two[1].label:  # make sure both classes appear
            for s in ds.samples[2:]:
                if s.label != two[0].label:
                    two[1] = s
                    break
        cfg = ModelConfig(h=8, d_w=16, dropout_p=0.0, seed=0)
        hyper = TrainSettings(batch_size=2, max_epochs=60, patience=60)
        bundle, history = train("sspm", two, two, list(ds.dictionary.label_alphabet), cfg, hyper)
        m = evaluate(bundle, two)
        assert m.accuracy == 1.0

    def test_early_stop_respects_patience(self):
        ds = tiny_dataset(n=20)
        tr, dev, _ = split_temporal(ds.samples, 4, 2)
        cfg = ModelConfig(h=4, d_w=8, dropout_p=0.0, seed=0)
        hyper = TrainSettings(batch_size=8, max_epochs=50, patience=2)
        bundle, history = train("sspm", tr, dev, list(ds.dictionary.label_alphabet), cfg, hyper)
        assert len(history) < 50  # saturates and stops
        best = max(h["dev_acc"] for h in history)
        tail = [h["dev_acc"] for h in history[-2:]]
        assert all(t <= best for t in tail)

    def test_identical_seeds_identical_history_and_checkpoint(self, tmp_path):
        ds = tiny_dataset(n=16)
        tr, dev, _ = split_temporal(ds.samples, 3, 2)
        cfg = ModelConfig(h=4, d_w=8, seed=7)
        hyper = TrainSettings(batch_size=4, max_epochs=3, patience=5)
        runs = []
        for i in range(2):
            bundle, history = train("sspm", tr, dev, list(ds.dictionary.label_alphabet), cfg, hyper)
            path = str(tmp_path / f"run{i}.ckpt")
            bundle.save(path)
            runs.append((history, open(path, "rb").read()))
        assert runs[0][0] == runs[1][0]
        assert runs[0][1] == runs[1][1]

    def test_msspm_trains_on_covered_only(self):
        ds = tiny_dataset(n=16, p_covered=0.5)
        tr, dev, _ = split_temporal(ds.samples, 3, 2)
        cfg = ModelConfig(h=4, d_w=8, seed=1)
        hyper = TrainSettings(batch_size=4, max_epochs=2, patience=5)
        bundle, history = train("msspm", tr, dev, list(ds.dictionary.label_alphabet), cfg, hyper)
        m = evaluate(bundle, dev)
        assert m.micro_f1 is not None

    def test_evaluate_side_effect_free(self):
        ds = tiny_dataset(n=16)
        tr, dev, _ = split_temporal(ds.samples, 3, 2)
        cfg = ModelConfig(h=4, d_w=8, seed=1)
        bundle, _ = train("sspm", tr, dev, list(ds.dictionary.label_alphabet), cfg,
                          TrainSettings(batch_size=4, max_epochs=1, patience=5))
        m1 = evaluate(bundle, dev)
        m2 = evaluate(bundle, dev)
        assert m1 == m2

    def test_pipeline_requires_msspm(self):
        ds = tiny_dataset(n=16)
        tr, dev, _ = split_temporal(ds.samples, 3, 2)
        cfg = ModelConfig(h=4, d_w=8, seed=1)
        with pytest.raises(Exception):
            train("sspm", tr, dev, list(ds.dictionary.label_alphabet), cfg,
                  TrainSettings(max_epochs=1), pipeline=True)

    def test_history_csv_roundtrip_shape(self):
        hist = [{"stage": "joint", "epoch": 1, "train_loss": 0.5, "train_acc": 0.9,
                 "dev_acc": 0.8, "dev_mcc": 0.4, "dev_micro_f1": 0.7}]
        csv = history_to_csv(hist)
        lines = csv.strip().split("\n")
        assert len(lines) == 2
        assert lines[0].count(",") == lines[1].count(",")


def test_paper_scale_settings_restore_full_size():
    cfg, hyper = paper_scale_settings()
    assert cfg.h == 256
    assert cfg.lstm_layers == 3
    assert hyper.batch_size == 128
    assert hyper.vocab_size == 50_000
    assert hyper.max_epochs == 60
