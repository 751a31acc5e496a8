"""End-to-end assembly of the two movement predictors.

SSPM consumes precomputed role labels; MSSPM predicts them with a
self-attended BiLSTM(-CRF) head and feeds its own predictions downstream
(the label decision is discrete, so no gradient flows through it).  Input
forms and ablation switches reshape the graph at forward time.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .layers import CrfParams, co_attention, crf_nll, crf_viterbi, fuse, gated_sum, self_attention
from .market import STEP_WIDTH, MinMaxScaler, MovementSample, scale_window
from .nn import ParamStore, Tensor

INPUT_FORMS = ("no_text", "no_event", "coarse", "fine")
ABLATIONS = ("fusion_off", "self_attn_off", "co_attn_off", "gated_sum_off", "crf_off")

PAD, UNK = "<pad>", "<unk>"


@dataclass(frozen=True)
class ModelConfig:
    h: int = 32
    d_w: int = 64
    lstm_layers: int = 1
    dropout_p: float = 0.2
    input_form: str = "fine"
    ablations: frozenset = frozenset()
    lam: float = 0.43
    seed: int = 0
    teacher_forcing: bool = False

    def __post_init__(self):
        if self.input_form not in INPUT_FORMS:
            raise ValueError(f"unknown input form {self.input_form!r}")
        unknown = set(self.ablations) - set(ABLATIONS)
        if unknown:
            raise ValueError(f"unknown ablations {sorted(unknown)}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must be in [0, 1]")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")

    @property
    def d_e(self) -> int:
        return 2 * self.h  # event embeddings sized to match the text side

    def ablated(self, name: str) -> bool:
        return name in self.ablations

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "d_w": self.d_w,
            "lstm_layers": self.lstm_layers,
            "dropout_p": self.dropout_p,
            "input_form": self.input_form,
            "ablations": sorted(self.ablations),
            "lam": self.lam,
            "seed": self.seed,
            "teacher_forcing": self.teacher_forcing,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        return cls(
            h=obj["h"],
            d_w=obj["d_w"],
            lstm_layers=obj["lstm_layers"],
            dropout_p=obj["dropout_p"],
            input_form=obj["input_form"],
            ablations=frozenset(obj["ablations"]),
            lam=obj["lam"],
            seed=obj["seed"],
            teacher_forcing=obj.get("teacher_forcing", False),
        )


def _create_bilstm(store: ParamStore, prefix: str, in_dim: int, h: int, layers: int) -> None:
    for i in range(layers):
        d = in_dim if i == 0 else 2 * h
        for direction in ("fw", "bw"):
            store.create(f"{prefix}.l{i}.{direction}.W", (d, 4 * h))
            store.create(f"{prefix}.l{i}.{direction}.U", (h, 4 * h))
            store.create(f"{prefix}.l{i}.{direction}.b", (4 * h,))


def _bilstm_layers(store: ParamStore, prefix: str, layers: int):
    return [
        {
            "fw": (store[f"{prefix}.l{i}.fw.W"], store[f"{prefix}.l{i}.fw.U"], store[f"{prefix}.l{i}.fw.b"]),
            "bw": (store[f"{prefix}.l{i}.bw.W"], store[f"{prefix}.l{i}.bw.U"], store[f"{prefix}.l{i}.bw.b"]),
        }
        for i in range(layers)
    ]


def init_sspm_params(store: ParamStore, cfg: ModelConfig, vocab_size: int, n_labels: int) -> None:
    """Create every parameter the configured SSPM forward pass touches."""
    h = cfg.h
    uses_text = cfg.input_form != "no_text"
    if uses_text:
        store.create("word_emb", (vocab_size, cfg.d_w))
        if cfg.input_form != "no_event":
            store.create("label_emb", (n_labels, cfg.d_e))
        _create_bilstm(store, "lstm_x", cfg.d_w, h, cfg.lstm_layers)
        if not cfg.ablated("self_attn_off"):
            store.create("W1_x", (2 * h, 2 * h))
        if not cfg.ablated("fusion_off"):
            store.create("W_f", (8 * h, 2 * h))
            store.create("b_f", (2 * h,))
    _create_bilstm(store, "lstm_y", STEP_WIDTH, h, cfg.lstm_layers)
    if not cfg.ablated("self_attn_off"):
        store.create("W1_y", (2 * h, 2 * h))
    if uses_text:
        if not cfg.ablated("co_attn_off"):
            store.create("W2", (2 * h, 2 * h))
        if not cfg.ablated("gated_sum_off"):
            store.create("W_gx", (4 * h, 2 * h))
            store.create("b_gx", (2 * h,))
            store.create("W_gy", (4 * h, 2 * h))
            store.create("b_gy", (2 * h,))
    store.create("W_p", (4 * h, 2))
    store.create("b_p", (2,))


def init_msspm_params(store: ParamStore, cfg: ModelConfig, vocab_size: int, n_labels: int) -> None:
    """MSSPM = shared text/stock trunk plus the label head (and CRF unless
    ablated).  Input-form variants do not apply; the extractor needs text."""
    if cfg.input_form != "fine":
        raise ValueError("MSSPM always predicts fine-grained labels")
    h = cfg.h
    store.create("word_emb", (vocab_size, cfg.d_w))
    store.create("label_emb", (n_labels, cfg.d_e))
    _create_bilstm(store, "lstm_x", cfg.d_w, h, cfg.lstm_layers)
    if not cfg.ablated("self_attn_off"):
        store.create("W1_x", (2 * h, 2 * h))
    store.create("W_l", (2 * h, n_labels))
    store.create("b_l", (n_labels,))
    if not cfg.ablated("crf_off"):
        store.create("crf.trans", (n_labels, n_labels))
        store.create("crf.start", (n_labels,))
    if not cfg.ablated("fusion_off"):
        store.create("W_f", (8 * h, 2 * h))
        store.create("b_f", (2 * h,))
    _create_bilstm(store, "lstm_y", STEP_WIDTH, h, cfg.lstm_layers)
    if not cfg.ablated("self_attn_off"):
        store.create("W1_y", (2 * h, 2 * h))
    if not cfg.ablated("co_attn_off"):
        store.create("W2", (2 * h, 2 * h))
    if not cfg.ablated("gated_sum_off"):
        store.create("W_gx", (4 * h, 2 * h))
        store.create("b_gx", (2 * h,))
        store.create("W_gy", (4 * h, 2 * h))
        store.create("b_gy", (2 * h,))
    store.create("W_p", (4 * h, 2))
    store.create("b_p", (2,))

EXTRACTOR_PARAMS = ("word_emb", "lstm_x.", "W1_x", "W_l", "b_l", "crf.")


def extractor_param_names(store: ParamStore) -> set[str]:
    """Parameters belonging to the event extraction head (for pipeline freezing)."""
    out = set()
    for name in store.names():
        if any(name == p or name.startswith(p) for p in EXTRACTOR_PARAMS):
            out.add(name)
    return out


def _stock_branch(window: np.ndarray, store: ParamStore, cfg: ModelConfig, train: bool, rng) -> Tensor:
    y = Tensor(window)
    Hy = nn.bilstm(y, _bilstm_layers(store, "lstm_y", cfg.lstm_layers), cfg.dropout_p, train, rng)
    if cfg.ablated("self_attn_off"):
        return Hy
    return self_attention(Hy, store["W1_y"])


def _text_trunk(token_ids, store: ParamStore, cfg: ModelConfig, train: bool, rng) -> Tensor:
    Ex = nn.embedding(store["word_emb"], token_ids)
    Ex = nn.dropout(Ex, cfg.dropout_p, train, rng)
    Hx = nn.bilstm(Ex, _bilstm_layers(store, "lstm_x", cfg.lstm_layers), cfg.dropout_p, train, rng)
    if cfg.ablated("self_attn_off"):
        return Hx
    return self_attention(Hx, store["W1_x"])


def _fuse_event(Sx: Tensor, Ee: Tensor, store: ParamStore, cfg: ModelConfig) -> Tensor:
    if cfg.ablated("fusion_off"):
        return nn.add(Sx, Ee)
    return fuse(Sx, Ee, store["W_f"], store["b_f"])


def _interact_and_predict(
    Hpx: Tensor, Sy: Tensor, store: ParamStore, cfg: ModelConfig
) -> tuple[Tensor, Tensor]:
    if cfg.ablated("co_attn_off"):
        Cx, Cy = Hpx, Sy
    else:
        Cx, Cy = co_attention(Hpx, Sy, store["W2"])
    if cfg.ablated("gated_sum_off"):
        Gx, Gy = Cx, Cy
    else:
        Gx = gated_sum(Hpx, Cx, store["W_gx"], store["b_gx"])
        Gy = gated_sum(Sy, Cy, store["W_gy"], store["b_gy"])
    z = nn.concat([nn.mean_pool(Gx), nn.mean_pool(Gy)])
    logits = nn.add(nn.matmul(z, store["W_p"]), store["b_p"])
    return nn.softmax(logits), logits


def sspm_forward(
    token_ids,
    role_label_ids,
    window: np.ndarray,
    store: ParamStore,
    cfg: ModelConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """Returns (class distribution, logits).  ``role_label_ids`` may be None
    only for the no_text / no_event input forms."""
    Sy = _stock_branch(window, store, cfg, train, rng)
    if cfg.input_form == "no_text":
        # Text branch fully severed: the stock side cannot co-attend, and the
        # text half of the prediction input is a constant zero vector.
        gy = nn.mean_pool(Sy)
        z = nn.concat([nn.zeros((2 * cfg.h,)), gy])
        logits = nn.add(nn.matmul(z, store["W_p"]), store["b_p"])
        return nn.softmax(logits), logits

    Sx = _text_trunk(token_ids, store, cfg, train, rng)
    L = Sx.data.shape[0]
    if cfg.input_form == "no_event":
        Ee = nn.zeros((L, cfg.d_e))
    else:
        if role_label_ids is None:
            raise ValueError(f"input form {cfg.input_form!r} needs role labels")
        Ee = nn.embedding(store["label_emb"], role_label_ids)
    Hpx = _fuse_event(Sx, Ee, store, cfg)
    return _interact_and_predict(Hpx, Sy, store, cfg)


@dataclass
class MsspmOutput:
    pred_labels: list[int]
    emissions: Tensor
    probs: Tensor
    logits: Tensor


def msspm_forward(
    token_ids,
    window: np.ndarray,
    store: ParamStore,
    cfg: ModelConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
    gold_labels=None,
) -> MsspmOutput:
    """Extractor emissions feed both the sequence loss and (via the decoded
    discrete labels) the downstream fusion."""
    Sx = _text_trunk(token_ids, store, cfg, train, rng)
    emissions = nn.add(nn.matmul(Sx, store["W_l"]), store["b_l"])
    if cfg.ablated("crf_off"):
        pred = [int(i) for i in emissions.data.argmax(axis=1)]
    else:
        crf = CrfParams(store["crf.trans"], store["crf.start"])
        pred = crf_viterbi(emissions, crf)
    embed_ids = gold_labels if (cfg.teacher_forcing and train and gold_labels is not None) else pred
    Ee = nn.embedding(store["label_emb"], embed_ids)
    Hpx = _fuse_event(Sx, Ee, store, cfg)
    Sy = _stock_branch(window, store, cfg, train, rng)
    probs, logits = _interact_and_predict(Hpx, Sy, store, cfg)
    return MsspmOutput(pred, emissions, probs, logits)


def msspm_event_loss(emissions: Tensor, gold_labels, store: ParamStore, cfg: ModelConfig) -> Tensor:
    """Sequence NLL through the CRF, or summed per-token CE when ablated."""
    if cfg.ablated("crf_off"):
        return nn.sequence_cross_entropy(emissions, gold_labels)
    crf = CrfParams(store["crf.trans"], store["crf.start"])
    return crf_nll(emissions, gold_labels, crf)


def multitask_loss(event_nll: Tensor, stock_nll: Tensor, lam: float, L: int) -> Tensor:
    """Convex combination lam * event/L + (1 - lam) * stock."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda outside [0, 1]")
    if L < 1:
        raise ValueError("sequence length must be positive")
    return nn.add(nn.scale(event_nll, lam / L), nn.scale(stock_nll, 1.0 - lam))


# ---------------------------------------------------------------------------
# Bundles: parameters plus the preprocessing state they were trained with


def build_vocab(token_lists, max_size: int) -> list[str]:
    """PAD, UNK, then the most frequent tokens (ties alphabetical)."""
    counts: dict[str, int] = {}
    for tokens in token_lists:
        for tok in tokens:
            t = tok.lower()
            counts[t] = counts.get(t, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [PAD, UNK] + [t for t, _ in ranked[: max(0, max_size - 2)]]


@dataclass
class ModelBundle:
    kind: str  # "sspm" | "msspm"
    cfg: ModelConfig
    store: ParamStore
    vocab: list[str]
    labels: list[str]
    scaler: MinMaxScaler | None
    token_to_id: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.token_to_id:
            self.token_to_id = {t: i for i, t in enumerate(self.vocab)}

    @classmethod
    def create(cls, kind: str, cfg: ModelConfig, vocab: list[str], labels: list[str],
               scaler: MinMaxScaler | None) -> "ModelBundle":
        store = ParamStore(cfg.seed)
        if kind == "sspm":
            init_sspm_params(store, cfg, len(vocab), len(labels))
        elif kind == "msspm":
            init_msspm_params(store, cfg, len(vocab), len(labels))
        else:
            raise ValueError(f"unknown model kind {kind!r}")
        return cls(kind, cfg, store, vocab, labels, scaler)

    def encode_tokens(self, tokens) -> np.ndarray:
        unk = self.token_to_id[UNK]
        return np.asarray([self.token_to_id.get(t.lower(), unk) for t in tokens], dtype=np.intp)

    def scaled_window(self, sample: MovementSample) -> np.ndarray:
        if sample.window.scaled or self.scaler is None:
            return sample.window.data
        return scale_window(sample.window.data, self.scaler, sample.news.stock_id).data

    def role_ids_for(self, sample: MovementSample) -> np.ndarray | None:
        if self.cfg.input_form in ("no_text", "no_event"):
            return None
        seq = sample.spo if self.cfg.input_form == "coarse" else sample.roles
        if seq is None:
            raise ValueError(f"sample {sample.news.doc_id} lacks labels for "
                             f"input form {self.cfg.input_form!r}")
        return np.asarray(seq.labels, dtype=np.intp)

    def forward_sample(
        self, sample: MovementSample, train: bool = False,
        rng: np.random.Generator | None = None,
    ):
        ids = self.encode_tokens(sample.news.tokens)
        window = self.scaled_window(sample)
        if self.kind == "sspm":
            probs, logits = sspm_forward(
                ids, self.role_ids_for(sample), window, self.store, self.cfg, train, rng
            )
            return probs, logits
        out = msspm_forward(
            ids, window, self.store, self.cfg, train, rng,
            gold_labels=np.asarray(sample.roles.labels, dtype=np.intp) if sample.roles else None,
        )
        return out

    def save(self, path: str) -> None:
        nn.save_checkpoint(
            path,
            config={"kind": self.kind, "model": self.cfg.to_dict()},
            vocab=self.vocab,
            labels=self.labels,
            scaler=self.scaler.to_jsonable() if self.scaler else None,
            store=self.store,
        )

    @classmethod
    def load(cls, path: str) -> "ModelBundle":
        ckpt = nn.load_checkpoint(path)
        cfg = ModelConfig.from_dict(ckpt.config["model"])
        kind = ckpt.config["kind"]
        bundle = cls.create(
            kind, cfg, ckpt.vocab, ckpt.labels,
            MinMaxScaler.from_jsonable(ckpt.scaler) if ckpt.scaler else None,
        )
        bundle.store.load_values(ckpt.params)
        return bundle


def ensemble_predict(
    sample: MovementSample, sspm: ModelBundle, msspm: ModelBundle
) -> np.ndarray:
    """Dictionary-covered news goes to SSPM, uncovered to MSSPM; the routed
    model's distribution is returned unchanged."""
    if sspm.labels != msspm.labels:
        raise ValueError("ensemble checkpoints disagree on the label alphabet")
    if sample.roles.covered:
        probs, _ = sspm.forward_sample(sample)
        return probs.data
    return msspm.forward_sample(sample).probs.data
