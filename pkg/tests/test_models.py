import numpy as np
import numpy.testing as npt
import pytest

from finevent import nn
from finevent.dictionary import load_dictionary
from finevent.models import (
    ABLATIONS,
    ModelBundle,
    ModelConfig,
    build_vocab,
    ensemble_predict,
    extractor_param_names,
    msspm_event_loss,
    msspm_forward,
    multitask_loss,
    sspm_forward,
)
from finevent.nn import Tensor, grad_check
from finevent.synth import SynthConfig, generate

DICT = """
event alpha category a
trigger go
role who necessary pos {NNP} path down:nsubj span 2
role what optional pos {NN} path down:obj span 2

event beta category b
trigger run
role who necessary pos {NNP} path down:nsubj span 2
"""


def setup_inputs(seed=0, L=4, T=2, vocab_size=12, n_labels=13):
    rng = np.random.default_rng(seed)
    tokens = rng.integers(0, vocab_size, size=L)
    roles = rng.integers(0, n_labels, size=L)
    window = rng.random((T, 120))
    return tokens, roles, window


def make_bundle(kind="sspm", **cfg_kw):
    d = load_dictionary(DICT)
    labels = list(d.label_alphabet)
    vocab = ["<pad>", "<unk>"] + [f"w{i}" for i in range(10)]
    cfg = ModelConfig(h=8, d_w=16, lstm_layers=1, dropout_p=0.0, **cfg_kw)
    return ModelBundle.create(kind, cfg, vocab, labels, None), cfg


class TestSspmForward:
    def test_distribution_sums_to_one(self):
        b, cfg = make_bundle()
        tokens, roles, window = setup_inputs()
        probs, logits = sspm_forward(tokens, roles, window, b.store, cfg)
        assert probs.shape == (2,)
        assert np.all(probs.data >= 0)
        assert probs.data.sum() == pytest.approx(1.0, abs=1e-12)

    def test_declared_intermediate_shapes(self):
        from finevent.models import _stock_branch, _text_trunk, _fuse_event
        from finevent.layers import co_attention
        b, cfg = make_bundle()  # h=8 -> 2h=16
        tokens, roles, window = setup_inputs(L=4, T=2)
        Sx = _text_trunk(tokens, b.store, cfg, False, None)
        assert Sx.shape == (4, 16)
        Sy = _stock_branch(window, b.store, cfg, False, None)
        assert Sy.shape == (2, 16)
        Ee = nn.embedding(b.store["label_emb"], roles)
        Hp = _fuse_event(Sx, Ee, b.store, cfg)
        assert Hp.shape == (4, 16)
        Cx, Cy = co_attention(Hp, Sy, b.store["W2"])
        assert Cx.shape == (4, 16) and Cy.shape == (2, 16)

    def test_no_event_equals_fine_with_zeroed_table(self):
        b, cfg = make_bundle(input_form="fine")
        tokens, roles, window = setup_inputs()
        b.store["label_emb"].data[:] = 0.0
        fine_probs, _ = sspm_forward(tokens, roles, window, b.store, cfg)
        ne_cfg = ModelConfig(h=8, d_w=16, lstm_layers=1, dropout_p=0.0, input_form="no_event")
        ne_probs, _ = sspm_forward(tokens, None, window, b.store, ne_cfg)
        npt.assert_array_equal(fine_probs.data, ne_probs.data)

    def test_no_text_invariant_to_tokens(self):
        b, cfg = make_bundle(input_form="no_text")
        _, _, window = setup_inputs()
        out1, _ = sspm_forward(np.array([1, 2, 3]), None, window, b.store, cfg)
        out2, _ = sspm_forward(np.array([5, 5, 5, 5, 5, 5]), None, window, b.store, cfg)
        npt.assert_array_equal(out1.data, out2.data)

    def test_missing_role_labels_rejected(self):
        b, cfg = make_bundle(input_form="fine")
        tokens, _, window = setup_inputs()
        with pytest.raises(ValueError, match="role labels"):
            sspm_forward(tokens, None, window, b.store, cfg)

    def test_ablations_run_and_change_output(self):
        tokens, roles, window = setup_inputs()
        base, cfg = make_bundle(seed=3)
        base_probs, _ = sspm_forward(tokens, roles, window, base.store, cfg)
        for ab in ("fusion_off", "self_attn_off", "co_attn_off", "gated_sum_off"):
            b, acfg = make_bundle(seed=3, ablations=frozenset({ab}))
            probs, _ = sspm_forward(tokens, roles, window, b.store, acfg)
            assert probs.data.sum() == pytest.approx(1.0, abs=1e-12)

    def test_forward_deterministic(self):
        tokens, roles, window = setup_inputs()
        outs = []
        for _ in range(2):
            b, cfg = make_bundle(seed=9)
            probs, _ = sspm_forward(tokens, roles, window, b.store, cfg)
            outs.append(probs.data.tobytes())
        assert outs[0] == outs[1]

    def test_vocab_permutation_invariance(self):
        b, cfg = make_bundle(seed=4)
        tokens, roles, window = setup_inputs()
        base, _ = sspm_forward(tokens, roles, window, b.store, cfg)
        perm = np.random.default_rng(0).permutation(len(b.vocab))
        inv = np.argsort(perm)
        b.store["word_emb"].data = b.store["word_emb"].data[inv]
        permuted_tokens = perm[tokens]
        out, _ = sspm_forward(permuted_tokens, roles, window, b.store, cfg)
        npt.assert_array_equal(base.data, out.data)


class TestMsspmForward:
    def test_output_contract(self):
        b, cfg = make_bundle("msspm")
        tokens, roles, window = setup_inputs()
        out = msspm_forward(tokens, window, b.store, cfg)
        assert len(out.pred_labels) == len(tokens)
        assert all(0 <= i < len(b.labels) for i in out.pred_labels)
        assert out.probs.data.sum() == pytest.approx(1.0, abs=1e-12)
        assert out.emissions.shape == (len(tokens), len(b.labels))

    def test_crf_off_uses_per_token_argmax(self):
        b, cfg = make_bundle("msspm", ablations=frozenset({"crf_off"}))
        tokens, roles, window = setup_inputs()
        out = msspm_forward(tokens, window, b.store, cfg)
        argmax = nn.softmax(out.emissions).data.argmax(axis=1)
        npt.assert_array_equal(out.pred_labels, argmax)

    def test_input_form_restricted(self):
        with pytest.raises(ValueError):
            make_bundle("msspm", input_form="no_event")

    def test_event_loss_crf_vs_ce(self):
        tokens, roles, window = setup_inputs()
        b, cfg = make_bundle("msspm")
        out = msspm_forward(tokens, window, b.store, cfg)
        loss = msspm_event_loss(out.emissions, roles, b.store, cfg)
        assert loss.item() >= -1e-9
        b2, cfg2 = make_bundle("msspm", ablations=frozenset({"crf_off"}))
        out2 = msspm_forward(tokens, window, b2.store, cfg2)
        ce = msspm_event_loss(out2.emissions, roles, b2.store, cfg2)
        want = nn.sequence_cross_entropy(out2.emissions, roles).item()
        assert ce.item() == pytest.approx(want, abs=1e-12)

    def test_extractor_param_partition(self):
        b, _ = make_bundle("msspm")
        names = extractor_param_names(b.store)
        assert "W_l" in names and "crf.trans" in names and "word_emb" in names
        assert any(n.startswith("lstm_x.") for n in names)
        assert not any(n.startswith("lstm_y.") for n in names)
        assert "W_p" not in names


class TestMultitaskLoss:
    def test_boundaries_and_hand_value(self):
        ev, st = Tensor(2.0), Tensor(0.7)
        assert multitask_loss(ev, st, 0.0, 4).item() == pytest.approx(0.7)
        assert multitask_loss(ev, st, 1.0, 4).item() == pytest.approx(0.5)
        assert multitask_loss(ev, st, 0.43, 4).item() == pytest.approx(0.614)

    def test_validation(self):
        with pytest.raises(ValueError):
            multitask_loss(Tensor(1.0), Tensor(1.0), 1.5, 4)
        with pytest.raises(ValueError):
            multitask_loss(Tensor(1.0), Tensor(1.0), 0.5, 0)


class TestGradChecksFullModels:
    def test_sspm_full_loss(self):
        b, cfg = make_bundle(seed=0)
        small = ModelConfig(h=4, d_w=8, lstm_layers=1, dropout_p=0.0, seed=15)
        bundle = ModelBundle.create("sspm", small, b.vocab, b.labels, None)
        rng = np.random.default_rng(115)
        tokens = rng.integers(0, len(b.vocab), size=6)
        roles = rng.integers(0, len(b.labels), size=6)
        window = rng.random((3, 120))
        label = int(rng.integers(0, 2))

        def loss():
            _, logits = sspm_forward(tokens, roles, window, bundle.store, small)
            return nn.cross_entropy(logits, label)
        assert grad_check(loss, bundle.store, eps=1e-5) < 1e-4

    def test_msspm_full_loss_with_stop_gradient(self):
        b, cfg = make_bundle(seed=0)
        small = ModelConfig(h=4, d_w=8, lstm_layers=1, dropout_p=0.0, seed=15)
        bundle = ModelBundle.create("msspm", small, b.vocab, b.labels, None)
        rng = np.random.default_rng(115)
        tokens = rng.integers(0, len(b.vocab), size=6)
        roles = rng.integers(0, len(b.labels), size=6)
        window = rng.random((3, 120))
        label = int(rng.integers(0, 2))

        def loss():
            out = msspm_forward(tokens, window, bundle.store, small)
            ev = msspm_event_loss(out.emissions, roles, bundle.store, small)
            st = nn.cross_entropy(out.logits, label)
            return multitask_loss(ev, st, small.lam, len(tokens))
        assert grad_check(loss, bundle.store, eps=1e-5) < 1e-4


class TestBundle:
    def test_checkpoint_roundtrip_preserves_outputs(self, tmp_path):
        ds = generate(SynthConfig(n_samples=12, seed=3))
        vocab = build_vocab((s.news.tokens for s in ds.samples), 100)
        cfg = ModelConfig(h=4, d_w=8, dropout_p=0.0, seed=1)
        from finevent.market import fit_minmax_scaler
        windows = {}
        for s in ds.samples:
            windows.setdefault(s.news.stock_id, []).append(s.window.data)
        scaler = fit_minmax_scaler(windows)
        b = ModelBundle.create("sspm", cfg, vocab, list(ds.dictionary.label_alphabet), scaler)
        path = str(tmp_path / "sspm.ckpt")
        b.save(path)
        b2 = ModelBundle.load(path)
        for sample in ds.samples[:4]:
            p1, _ = b.forward_sample(sample)
            p2, _ = b2.forward_sample(sample)
            npt.assert_array_equal(p1.data, p2.data)

    def test_unknown_token_maps_to_unk(self):
        b, _ = make_bundle()
        ids = b.encode_tokens(["w0", "never-seen", "W1"])
        assert ids[1] == 1  # unk
        assert ids[0] == b.token_to_id["w0"]
        assert ids[2] == b.token_to_id["w1"]  # case folded


class TestEnsemble:
    def _bundles(self, ds):
        vocab = build_vocab((s.news.tokens for s in ds.samples), 200)
        labels = list(ds.dictionary.label_alphabet)
        from finevent.market import fit_minmax_scaler
        windows = {}
        for s in ds.samples:
            windows.setdefault(s.news.stock_id, []).append(s.window.data)
        scaler = fit_minmax_scaler(windows)
        cfg = ModelConfig(h=4, d_w=8, dropout_p=0.0, seed=2)
        sspm = ModelBundle.create("sspm", cfg, vocab, labels, scaler)
        msspm = ModelBundle.create("msspm", cfg, vocab, labels, scaler)
        return sspm, msspm

    def test_routing_bit_equality(self):
        ds = generate(SynthConfig(n_samples=30, p_covered=0.5, seed=6))
        sspm, msspm = self._bundles(ds)
        routed_to_sspm = 0
        for sample in ds.samples:
            probs = ensemble_predict(sample, sspm, msspm)
            if sample.roles.covered:
                want, _ = sspm.forward_sample(sample)
                routed_to_sspm += 1
            else:
                want = msspm.forward_sample(sample).probs
            npt.assert_array_equal(probs, want.data)
        assert routed_to_sspm == sum(1 for s in ds.samples if s.roles.covered)

    def test_routing_fraction_matches_coverage(self):
        ds = generate(SynthConfig(n_samples=40, p_covered=0.7, seed=8))
        covered = sum(1 for s in ds.samples if s.roles.covered)
        assert covered == 28

    def test_alphabet_mismatch_rejected(self):
        ds = generate(SynthConfig(n_samples=10, p_covered=0.5, seed=6))
        sspm, msspm = self._bundles(ds)
        msspm.labels = msspm.labels[:-1]
        with pytest.raises(ValueError, match="alphabet"):
            ensemble_predict(ds.samples[0], sspm, msspm)


def test_build_vocab_order_and_cutoff():
    lists = [["b", "a", "b"], ["c", "b", "a"]]
    vocab = build_vocab(lists, 4)
    assert vocab == ["<pad>", "<unk>", "b", "a"]  # freq then alphabetical
