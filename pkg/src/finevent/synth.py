"""Synthetic corpus + market generator with planted ground truth.

Covered sentences are template-built to match exactly one dictionary event
type: the trigger, role heads, POS tags and dependency arcs all agree with
the type's patterns, so the planted frame is the known-good extraction
answer.  Uncovered sentences contain no trigger token at all.

Each sample hides a polarity token; minute bars are noise walks whose
sector-corrected drift is forced to match that polarity with probability
``p_signal`` (the movement label is computed by the real labeling rule, never
assigned directly).  Trade windows only ever see the pre-news noise segment,
so text is the only usable signal.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta

import numpy as np

from .corpus import AnnotatedNews, check_news, parse_corpus, serialize_corpus
from .dictionary import EventDictionary, load_dictionary, serialize_dictionary
from .extraction import extract_detailed, extract_spo
from .market import (
    SESSION_OPEN,
    TRADE_TIME_HI,
    MinuteBar,
    MovementSample,
    TradeCalendar,
    TradeWindowTensor,
    load_bars,
    load_calendar,
    load_index_values,
    load_sector_map,
    movement_label,
    save_bars,
    save_calendar,
    save_index_values,
    save_sector_map,
    stock_day_windows,
    time_bucket,
)

DEFAULT_DICTIONARY = os.path.join(os.path.dirname(__file__), "data", "sample_dictionary.txt")


def load_default_dictionary() -> EventDictionary:
    with open(DEFAULT_DICTIONARY, encoding="utf-8") as f:
        return load_dictionary(f)


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 500
    p_covered: float = 0.7
    p_signal: float = 1.0
    n_stocks: int = 20
    n_sectors: int = 4
    n_firms: int = 12
    n_persons: int = 8
    n_distractors: int = 0
    volatility: float = 0.001
    drift_min: float = 0.01
    drift_max: float = 0.03
    session_minutes: int = 60
    n_days: int = 250
    start_day: date = date(2024, 1, 1)
    bucket_mix: tuple[float, float, float] = (0.44, 0.24, 0.32)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_covered <= 1.0:
            raise ValueError("p_covered outside [0, 1]")
        if not 0.0 <= self.p_signal <= 1.0:
            raise ValueError("p_signal outside [0, 1]")
        if self.session_minutes < 20:
            raise ValueError("session too short for in-trade windows")


@dataclass
class GoldRecord:
    doc_id: str
    covered: bool
    type_id: str | None
    trigger_span: tuple[int, int] | None
    role_fills: dict[str, tuple[int, int]]
    labels: tuple[int, ...]  # planted BIO over the dictionary alphabet
    movement: int
    final_return: float
    bucket: str
    polarity: int  # +1 / -1 token planted in the text
    drift_sign: int  # +1 / -1 sign forced into the market series


@dataclass
class SynthDataset:
    cfg: SynthConfig
    dictionary: EventDictionary
    calendar: TradeCalendar
    news: list[AnnotatedNews]
    gold: list[GoldRecord]
    bars: dict[tuple[str, date], list[MinuteBar]]
    index_values: dict[tuple[str, date], list[tuple[int, float]]]
    sector_map: dict[str, str]
    samples: list[MovementSample] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Lexicons.  None of these tokens may collide with a dictionary trigger token;
# the generator enforces that at startup.

FIRMS = ["alphacorp", "betainc", "gammatech", "deltaco", "epsilonbank", "zetagroup",
         "etaholdings", "thetamotors", "iotapharma", "kappasteel", "lambdafoods", "muair"]
PERSON_FIRST = ["john", "mary", "ken", "yuki", "akira", "sara", "tom", "lisa"]
PERSON_LAST = ["smith", "tanaka", "sato", "jones", "suzuki", "brown", "kimura", "davis"]
EARN_TYPES = ["quarterly", "interim", "annual", "operating"]
FORECAST_KINDS = ["group", "parent"]
DIV_TYPES = ["special", "interim", "annual"]
TITLES = ["ceo", "chairman", "president", "director"]
PRODUCTS = ["battery", "sensor", "chip", "engine", "display", "turbine"]
REASONS = [("patent", "dispute"), ("contract", "breach"), ("safety", "claim")]
UNITS = ["million", "billion"]
POS_WORDS = ["upbeat", "surging"]
NEG_WORDS = ["downbeat", "slumping"]
PREFIXES = ["today", "meanwhile", "overnight"]
UNCOV_VERBS = ["expands", "launches", "opens", "reviews", "considers", "unveils"]
UNCOV_NOUNS = ["facility", "program", "platform", "initiative", "campus", "laboratory"]
RATE_DIRS = ["up", "down"]


class _Sentence:
    """Token accumulator with arcs fixed up after all tokens exist."""

    def __init__(self):
        self.tokens: list[str] = []
        self.pos: list[str] = []
        self.head: list[int] = []
        self.label: list[str] = []

    def add(self, token: str, pos: str, head: int = -2, label: str = "dep") -> int:
        self.tokens.append(token)
        self.pos.append(pos)
        self.head.append(head)
        self.label.append(label)
        return len(self.tokens) - 1

    def arc(self, i: int, head: int, label: str) -> None:
        self.head[i] = head
        self.label[i] = label


@dataclass
class _Lexicons:
    firms: list[str]
    person_first: list[str]
    person_last: list[str]
    pos_words: list[str]
    neg_words: list[str]

    @classmethod
    def build(cls, cfg: SynthConfig, d: EventDictionary) -> "_Lexicons":
        firms = list(FIRMS)
        while len(firms) < cfg.n_firms:
            firms.append(f"firm{len(firms)}corp")
        firms = firms[: cfg.n_firms]
        first = PERSON_FIRST[: max(2, min(cfg.n_persons, len(PERSON_FIRST)))]
        last = PERSON_LAST[: max(2, min(cfg.n_persons, len(PERSON_LAST)))]
        lex = cls(firms, first, last, list(POS_WORDS), list(NEG_WORDS))
        triggers = d.trigger_tokens()
        pool = (lex.firms + lex.person_first + lex.person_last + lex.pos_words
                + lex.neg_words + EARN_TYPES + DIV_TYPES + TITLES + PRODUCTS
                + [w for pair in REASONS for w in pair] + UNITS + PREFIXES
                + UNCOV_VERBS + UNCOV_NOUNS + RATE_DIRS)
        clashes = sorted(set(pool) & triggers)
        if clashes:
            raise ValueError(f"generator lexicon collides with triggers: {clashes}")
        return lex


def _polarity_word(rng, lex: _Lexicons, sign: int) -> str:
    words = lex.pos_words if sign > 0 else lex.neg_words
    return words[rng.integers(0, len(words))]


def _choice(rng, seq):
    return seq[rng.integers(0, len(seq))]


@dataclass
class _Planted:
    type_id: str | None
    trigger_span: tuple[int, int] | None
    role_fills: dict[str, tuple[int, int]]
    spo: dict[str, tuple[int, int]]  # for uncovered: S/P/O spans
    verb: int


def _np_span(s: _Sentence, name: str, pos: str, pol: str | None) -> tuple[int, tuple[int, int]]:
    """[pol?] name ; returns (head index, span); pol attaches amod to the head."""
    start = len(s.tokens)
    pol_idx = s.add(pol, "JJ") if pol else None
    head = s.add(name, pos)
    if pol_idx is not None:
        s.arc(pol_idx, head, "amod")
    return head, (start, head)


def _money_phrase(s: _Sentence, rng, case_word: str, attach: int, rel: str) -> tuple[int, int]:
    """case NUM unit yen, e.g. "of 120 million yen"; head is the number."""
    c = s.add(case_word, "IN")
    num = s.add(str(int(rng.integers(2, 900))), "CD")
    unit = s.add(_choice(rng, UNITS), "CD")
    yen = s.add("yen", "NN")
    s.arc(c, num, "case")
    s.arc(unit, num, "compound")
    s.arc(yen, num, "compound")
    s.arc(num, attach, rel)
    return (c, yen)


def _time_phrase(s: _Sentence, rng, attach: int) -> tuple[int, int]:
    c = s.add("in", "IN")
    year = s.add(str(int(rng.integers(2024, 2029))), "CD")
    s.arc(c, year, "case")
    s.arc(year, attach, "obl:tmod")
    return (c, year)


def _maybe(rng, p: float = 0.5) -> bool:
    return bool(rng.random() < p)


def _build_covered(s: _Sentence, rng, lex: _Lexicons, type_id: str, pol_word: str) -> _Planted:
    """Append the main clause for one event type; returns planted spans."""
    fills: dict[str, tuple[int, int]] = {}

    def subj(name_role: str, pol: str | None) -> int:
        head, span = _np_span(s, _choice(rng, lex.firms), "NNP", pol)
        fills[name_role] = span
        return head

    if type_id in ("earnings_profit", "earnings_forecast", "dividend", "deals",
                   "legal_issues", "share_buyback", "broker_ratings"):
        # object-anchored trigger: SUBJ VERB [compound] TRIGGER ...
        subj_role = {"earnings_profit": "firm", "earnings_forecast": "firm",
                     "dividend": "firm", "deals": "firm", "legal_issues": "who",
                     "share_buyback": "who", "broker_ratings": "reviewer"}[type_id]
        subj_head = subj(subj_role, pol_word)
        verb_word = {"earnings_profit": "posts", "earnings_forecast": "raises",
                     "dividend": "declares", "deals": "wins",
                     "legal_issues": "faces", "share_buyback": "announces",
                     "broker_ratings": "raises"}[type_id]
        verb = s.add(verb_word, "VBZ", -1, "root")
        s.arc(subj_head, verb, "nsubj")

        if type_id == "earnings_profit":
            t = s.add(_choice(rng, EARN_TYPES), "NN")
            trig = s.add(_choice(rng, ["profit", "earnings"]), "NN")
            s.arc(t, trig, "compound")
            s.arc(trig, verb, "obj")
            fills["type"] = (t, t)
            fills["value"] = _money_phrase(s, rng, "of", trig, "nmod")
            if _maybe(rng):
                d_ = s.add(_choice(rng, RATE_DIRS), "RB")
                n_ = s.add(str(int(rng.integers(1, 60))), "CD")
                pct = s.add("percent", "NN")
                s.arc(d_, pct, "advmod")
                s.arc(n_, pct, "nummod")
                s.arc(pct, verb, "obl")
                fills["change_rate"] = (d_, pct)
            if _maybe(rng):
                fills["time"] = _time_phrase(s, rng, verb)
            trigger_span = (trig, trig)
        elif type_id == "earnings_forecast":
            kind = s.add(_choice(rng, FORECAST_KINDS), "NN")
            trig = s.add("forecast", "NN")
            s.arc(kind, trig, "compound")
            s.arc(trig, verb, "obj")
            fills["value"] = _money_phrase(s, rng, "of", trig, "nmod")
            if _maybe(rng):
                fills["time"] = _time_phrase(s, rng, verb)
            trigger_span = (kind, trig)
        elif type_id == "dividend":
            t = s.add(_choice(rng, DIV_TYPES), "NN")
            trig = s.add(_choice(rng, ["dividend", "div"]), "NN")
            s.arc(t, trig, "compound")
            s.arc(trig, verb, "obj")
            fills["type"] = (t, t)
            if _maybe(rng):
                fills["time"] = _time_phrase(s, rng, verb)
            trigger_span = (trig, trig)
        elif type_id == "deals":
            prod = s.add(_choice(rng, PRODUCTS), "NN")
            trig = s.add("order", "NN")
            s.arc(prod, trig, "compound")
            s.arc(trig, verb, "obj")
            fills["product"] = (prod, prod)
            if _maybe(rng):
                frm = s.add("from", "IN")
                prov = s.add(_choice(rng, lex.firms), "NNP")
                s.arc(frm, prov, "case")
                s.arc(prov, trig, "nmod")
                fills["provider"] = (frm, prov)
            if _maybe(rng):
                fills["value"] = _money_phrase(s, rng, "for", verb, "obl")
            trigger_span = (trig, trig)
        elif type_id == "legal_issues":
            trig = s.add(_choice(rng, ["lawsuit", "litigation"]), "NN")
            s.arc(trig, verb, "obj")
            if _maybe(rng):
                frm = s.add("from", "IN")
                tgt = s.add(_choice(rng, lex.firms), "NNP")
                s.arc(frm, tgt, "case")
                s.arc(tgt, trig, "nmod")
                fills["target"] = (frm, tgt)
            if _maybe(rng):
                over = s.add("over", "IN")
                r1, r2 = _choice(rng, REASONS)
                a = s.add(r1, "NN")
                b = s.add(r2, "NN")
                s.arc(over, b, "case")
                s.arc(a, b, "compound")
                s.arc(b, verb, "obl:cause")
                fills["reason"] = (over, b)
            trigger_span = (trig, trig)
        elif type_id == "share_buyback":
            sh = s.add("share", "NN")
            trig = s.add("repurchase", "NN")
            s.arc(sh, trig, "compound")
            s.arc(trig, verb, "obj")
            if _maybe(rng):
                fills["money"] = _money_phrase(s, rng, "of", trig, "nmod")
            trigger_span = (sh, trig)
        else:  # broker_ratings
            t1 = s.add("target", "NN")
            trig = s.add("price", "NN")
            s.arc(t1, trig, "compound")
            s.arc(trig, verb, "obj")
            of = s.add("of", "IN")
            tgt = s.add(_choice(rng, lex.firms), "NNP")
            s.arc(of, tgt, "case")
            s.arc(tgt, trig, "nmod")
            fills["target"] = (of, tgt)
            if _maybe(rng):
                to = s.add("to", "IN")
                val = s.add(str(int(rng.integers(500, 9000))), "CD")
                s.arc(to, val, "case")
                s.arc(val, verb, "obl")
                fills["new_price"] = (to, val)
            trigger_span = (t1, trig)
        return _Planted(type_id, trigger_span, fills, {}, verb)

    if type_id in ("ma", "buy"):
        # verb-anchored trigger: SUBJ TRIGGER OBJ ...
        host_obj = _maybe(rng)  # polarity token can sit in the object role too
        subj_head = subj("firm", None if host_obj else pol_word)
        trig_word = _choice(rng, ["acquires", "merges"]) if type_id == "ma" else "buys"
        verb = s.add(trig_word, "VBZ", -1, "root")
        s.arc(subj_head, verb, "nsubj")
        obj_head, obj_span = _np_span(s, _choice(rng, lex.firms), "NNP",
                                      pol_word if host_obj else None)
        s.arc(obj_head, verb, "obj")
        fills["target"] = obj_span
        money_role = "value" if type_id == "ma" else "price"
        if _maybe(rng):
            fills[money_role] = _money_phrase(s, rng, "for", verb, "obl")
        if _maybe(rng):
            fills["time"] = _time_phrase(s, rng, verb)
        return _Planted(type_id, (verb, verb), fills, {}, verb)

    if type_id == "personnel_affairs":
        subj_head = subj("who", pol_word)
        gapped = _maybe(rng)
        verb = s.add("names" if gapped else "appoints", "VBZ", -1, "root")
        s.arc(subj_head, verb, "nsubj")
        p1 = s.add(_choice(rng, lex.person_first), "NNP")
        p2 = s.add(_choice(rng, lex.person_last), "NNP")
        s.arc(p2, p1, "flat")
        s.arc(p1, verb, "obj")
        fills["person"] = (p1, p2)
        as_ = s.add("as", "IN")
        title = s.add(_choice(rng, TITLES), "NN")
        s.arc(as_, title, "case")
        s.arc(title, verb, "obl")
        # With the gapped trigger, "as" is an anchor and stays outside the span.
        fills["title"] = (title, title) if gapped else (as_, title)
        return _Planted(type_id, (verb, verb), fills, {}, verb)

    raise ValueError(f"no template for event type {type_id!r}")


def _build_uncovered(s: _Sentence, rng, lex: _Lexicons, pol_word: str) -> _Planted:
    host_obj = _maybe(rng)
    spo: dict[str, tuple[int, int]] = {}
    subj_head, subj_span = _np_span(s, _choice(rng, lex.firms), "NNP",
                                    None if host_obj else pol_word)
    verb = s.add(_choice(rng, UNCOV_VERBS), "VBZ", -1, "root")
    s.arc(subj_head, verb, "nsubj")
    spo["S"] = subj_span
    spo["P"] = (verb, verb)
    if host_obj or _maybe(rng, 0.85):
        start = len(s.tokens)
        pol_idx = s.add(pol_word, "JJ") if host_obj else None
        obj = s.add(_choice(rng, UNCOV_NOUNS), "NN")
        if pol_idx is not None:
            s.arc(pol_idx, obj, "amod")
        s.arc(obj, verb, "obj")
        spo["O"] = (start, obj)
    return _Planted(None, None, {}, spo, verb)


def _add_distractor(s: _Sentence, rng, lex: _Lexicons, verb_known: list[int]) -> None:
    """Bare [polarity firm] phrase with random sign, attached as `dep`."""
    sign = 1 if _maybe(rng) else -1
    head, _ = _np_span(s, _choice(rng, lex.firms), "NNP", _polarity_word(rng, lex, sign))
    verb_known.append(head)  # arc fixed once the verb index is known


def _labels_from_plan(plan: _Planted, length: int, d: EventDictionary) -> tuple[int, ...]:
    labels = [0] * length
    if plan.type_id is not None:
        for name, (lo, hi) in plan.role_fills.items():
            b, i = d.role_label_ids(plan.type_id, name)
            labels[lo] = b
            for k in range(lo + 1, hi + 1):
                labels[k] = i
    else:
        base = len(d.label_alphabet) - 6
        offsets = {"S": 0, "P": 2, "O": 4}
        for part, (lo, hi) in plan.spo.items():
            labels[lo] = base + offsets[part]
            for k in range(lo + 1, hi + 1):
                labels[k] = base + offsets[part] + 1
    return tuple(labels)


def _generate_sentence(
    rng, lex: _Lexicons, covered: bool, polarity: int,
    n_distractors: int, usable_types: list[str],
) -> tuple[_Sentence, _Planted]:
    s = _Sentence()
    pending_distractors: list[int] = []
    pre_parts = int(rng.integers(0, 3))
    prefix_idx = [s.add(_choice(rng, PREFIXES), "RB") for _ in range(pre_parts)]
    lead = n_distractors >= 2 or (n_distractors == 1 and _maybe(rng))
    if lead:
        _add_distractor(s, rng, lex, pending_distractors)
    pol_word = _polarity_word(rng, lex, polarity)
    if covered:
        plan = _build_covered(s, rng, lex, _choice(rng, usable_types), pol_word)
    else:
        plan = _build_uncovered(s, rng, lex, pol_word)
    tail = n_distractors - (1 if lead else 0)
    for _ in range(tail):
        _add_distractor(s, rng, lex, pending_distractors)
    for i in prefix_idx:
        s.arc(i, plan.verb, "advmod")
    for i in pending_distractors:
        s.arc(i, plan.verb, "dep")
    return s, plan


# ---------------------------------------------------------------------------
# Market series construction


def _make_calendar(start: date, n_days: int) -> TradeCalendar:
    days = []
    d = start
    while len(days) < n_days:
        if d.weekday() < 5:
            days.append(d)
        d += timedelta(days=1)
    return TradeCalendar(tuple(days))


def _non_trade_days(calendar: TradeCalendar) -> list[date]:
    all_days = set(calendar.days)
    out = []
    d = calendar.days[0]
    while d <= calendar.days[-1]:
        if d not in all_days:
            out.append(d)
        d += timedelta(days=1)
    return out


def _bars_from_closes(rng, open_price: float, closes: np.ndarray, first_minute: int) -> list[MinuteBar]:
    bars = []
    prev = open_price
    for k, c in enumerate(closes):
        o = prev
        lo, hi = min(o, c), max(o, c)
        pad = float(rng.uniform(0.0, 5e-4))
        high = hi * (1.0 + pad)
        low = lo * (1.0 - pad)
        vwap = (o + c) / 2.0
        volume = float(rng.integers(100, 10_000))
        bars.append(MinuteBar(first_minute + k, o, float(c), high, low, volume,
                              vwap * volume, vwap))
        prev = c
    return bars


def _noise_closes(rng, start: float, n: int, vol: float) -> np.ndarray:
    steps = 1.0 + rng.normal(0.0, vol, size=n)
    return start * np.cumprod(steps)


class _MarketBuilder:
    def __init__(self, cfg: SynthConfig, rng, calendar: TradeCalendar):
        self.cfg = cfg
        self.rng = rng
        self.calendar = calendar
        self.bars: dict[tuple[str, date], list[MinuteBar]] = {}
        self.index_values: dict[tuple[str, date], list[tuple[int, float]]] = {}
        self.claimed: set[tuple[str, date]] = set()
        self.session_end = SESSION_OPEN + cfg.session_minutes - 1

    def index_day(self, sector: str, day: date) -> list[tuple[int, float]]:
        key = (sector, day)
        if key not in self.index_values:
            start = 1000.0 * (1.0 + float(self.rng.normal(0.0, 0.01)))
            closes = _noise_closes(self.rng, start, self.cfg.session_minutes, self.cfg.volatility)
            self.index_values[key] = [
                (SESSION_OPEN + k, float(v)) for k, v in enumerate(closes)
            ]
        return self.index_values[key]

    def noise_day(self, stock: str, day: date) -> list[MinuteBar]:
        open_price = float(self.rng.uniform(500.0, 5000.0))
        closes = _noise_closes(self.rng, open_price, self.cfg.session_minutes, self.cfg.volatility)
        bars = _bars_from_closes(self.rng, open_price, closes, SESSION_OPEN)
        self.bars[(stock, day)] = bars
        return bars

    def in_trade_day(self, stock: str, sector: str, day: date, news_minute: int, drift: float) -> None:
        """Noise before the news minute; afterwards the closes bridge to a day
        close hitting stock return = sector return + drift."""
        bars = self.noise_day(stock, day)
        idx = {m: v for m, v in self.index_day(sector, day)}
        i_news = idx[news_minute]
        i_end = self.index_day(sector, day)[-1][1]
        r_sec = (i_end - i_news) / i_news
        p_news = bars[news_minute - SESSION_OPEN].close
        target = p_news * (1.0 + r_sec + drift)
        n_after = self.session_end - news_minute
        closes = np.linspace(p_news, target, n_after + 1)[1:]
        closes = closes * (1.0 + self.rng.normal(0.0, self.cfg.volatility / 4, size=n_after))
        closes[-1] = target
        tail = _bars_from_closes(self.rng, p_news, closes, news_minute + 1)
        self.bars[(stock, day)] = bars[: news_minute - SESSION_OPEN + 1] + tail

    def overnight_pair(self, stock: str, sector: str, last_day: date, next_day: date, drift: float) -> None:
        """Noise session on last_day; next_day opens at last close scaled by
        sector return + drift."""
        last = self.noise_day(stock, last_day)
        i_last = self.index_day(sector, last_day)[-1][1]
        i_next = self.index_day(sector, next_day)[0][1]
        r_sec = (i_next - i_last) / i_last
        n_open = last[-1].close * (1.0 + r_sec + drift)
        closes = _noise_closes(self.rng, n_open, self.cfg.session_minutes, self.cfg.volatility)
        self.bars[(stock, next_day)] = _bars_from_closes(self.rng, n_open, closes, SESSION_OPEN)


def generate(cfg: SynthConfig, dictionary: EventDictionary | None = None) -> SynthDataset:
    """Build the full synthetic dataset (news, market data, planted gold)."""
    d = dictionary or load_default_dictionary()
    usable = [t.type_id for t in d.types]
    if not usable:
        raise ValueError("dictionary has no usable event type")
    rng = np.random.default_rng(cfg.seed)
    lex = _Lexicons.build(cfg, d)
    calendar = _make_calendar(cfg.start_day, cfg.n_days)
    off_days = _non_trade_days(calendar)
    n_stocks = max(cfg.n_stocks, (3 * cfg.n_samples) // cfg.n_days + 1)
    stocks = [f"st{i:03d}" for i in range(n_stocks)]
    sector_map = {s: f"sec{i % cfg.n_sectors:02d}" for i, s in enumerate(stocks)}

    n_cov = round(cfg.p_covered * cfg.n_samples)
    flags = np.zeros(cfg.n_samples, dtype=bool)
    flags[:n_cov] = True
    rng.shuffle(flags)

    mb = _MarketBuilder(cfg, rng, calendar)
    session_end = mb.session_end
    news_list: list[AnnotatedNews] = []
    gold_list: list[GoldRecord] = []
    mix = np.asarray(cfg.bucket_mix) / sum(cfg.bucket_mix)

    for i in range(cfg.n_samples):
        covered = bool(flags[i])
        polarity = 1 if _maybe(rng) else -1
        drift_sign = polarity if rng.random() < cfg.p_signal else -polarity
        drift = drift_sign * float(rng.uniform(cfg.drift_min, cfg.drift_max))

        # Reserve market days so no two samples share a (stock, day) series.
        while True:
            stock = _choice(rng, stocks)
            bucket_kind = int(rng.choice(3, p=mix))
            if bucket_kind == 0:  # in trade time
                di = int(rng.integers(1, len(calendar.days) - 1))
                day = calendar.days[di]
                minute = int(rng.integers(SESSION_OPEN + 10,
                                          min(session_end - 8, TRADE_TIME_HI + 1)))
                when = datetime(day.year, day.month, day.day, minute // 60, minute % 60)
                claim = {(stock, day)}
            elif bucket_kind == 1:  # trade day, outside trade time
                di = int(rng.integers(1, len(calendar.days) - 1))
                day = calendar.days[di]
                if _maybe(rng):
                    minute = int(rng.integers(8 * 60, 9 * 60 + 10))
                    pair = (calendar.prev_trade_day(day), day)
                else:
                    minute = int(rng.integers(15 * 60 + 1, 20 * 60))
                    pair = (day, calendar.next_trade_day(day))
                when = datetime(day.year, day.month, day.day, minute // 60, minute % 60)
                claim = {(stock, pair[0]), (stock, pair[1])}
            else:  # weekend / holiday
                day = _choice(rng, off_days)
                minute = int(rng.integers(9 * 60, 17 * 60))
                when = datetime(day.year, day.month, day.day, minute // 60, minute % 60)
                last = calendar.prev_trade_day(day)
                pair = (last, calendar.next_trade_day(last))
                claim = {(stock, pair[0]), (stock, pair[1])}
            if not (claim & mb.claimed):
                mb.claimed |= claim
                break

        sector = sector_map[stock]
        if bucket_kind == 0:
            mb.in_trade_day(stock, sector, day, minute, drift)
        else:
            mb.overnight_pair(stock, sector, pair[0], pair[1], drift)

        sent, plan = _generate_sentence(rng, lex, covered, polarity,
                                        cfg.n_distractors, usable)
        news = AnnotatedNews(
            doc_id=f"synth{i:05d}",
            stock_id=stock,
            timestamp=when,
            tokens=tuple(sent.tokens),
            pos=tuple(sent.pos),
            dep_head=tuple(sent.head),
            dep_label=tuple(sent.label),
        )
        check_news(news)
        news_list.append(news)

        bars_by_day = {dy: b for (st, dy), b in mb.bars.items() if st == stock}
        idx_by_day = {dy: v for (sec, dy), v in mb.index_values.items() if sec == sector}
        movement, r_f = movement_label(bars_by_day, idx_by_day, when, calendar)
        if movement != (1 if drift_sign > 0 else 0):
            raise AssertionError("generator failed to force the movement sign")
        gold_list.append(
            GoldRecord(
                doc_id=news.doc_id,
                covered=covered,
                type_id=plan.type_id,
                trigger_span=plan.trigger_span,
                role_fills=dict(plan.role_fills),
                labels=_labels_from_plan(plan, len(news), d),
                movement=movement,
                final_return=r_f,
                bucket=time_bucket(when, calendar),
                polarity=polarity,
                drift_sign=drift_sign,
            )
        )

    ds = SynthDataset(cfg, d, calendar, news_list, gold_list, mb.bars,
                      mb.index_values, sector_map)
    ds.samples = assemble_samples(news_list, d, calendar, mb.bars,
                                  mb.index_values, sector_map)
    return ds


def assemble_samples(
    news_list: list[AnnotatedNews],
    d: EventDictionary,
    calendar: TradeCalendar,
    bars: dict[tuple[str, date], list[MinuteBar]],
    index_values: dict[tuple[str, date], list[tuple[int, float]]],
    sector_map: dict[str, str],
) -> list[MovementSample]:
    """The production path: extraction + windowing + labeling over raw data."""
    by_stock: dict[str, dict[date, list[MinuteBar]]] = {}
    for (stock, day), b in bars.items():
        by_stock.setdefault(stock, {})[day] = b
    by_sector: dict[str, dict[date, list[tuple[int, float]]]] = {}
    for (sector, day), v in index_values.items():
        by_sector.setdefault(sector, {})[day] = v

    samples = []
    for news in news_list:
        roles = extract_detailed(news, d).sequence
        spo = roles if not roles.covered else extract_spo(news, d)
        window = stock_day_windows(by_stock[news.stock_id], news.timestamp, calendar)
        label, r_f = movement_label(
            by_stock[news.stock_id], by_sector[sector_map[news.stock_id]],
            news.timestamp, calendar,
        )
        samples.append(
            MovementSample(
                news=news,
                window=TradeWindowTensor(window, scaled=False),
                roles=roles,
                label=label,
                time_bucket=time_bucket(news.timestamp, calendar),
                spo=spo,
                final_return=r_f,
            )
        )
    return samples


# ---------------------------------------------------------------------------
# On-disk dataset layout


def save_dataset(ds: SynthDataset, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "dictionary.txt"), "w", encoding="utf-8") as f:
        f.write(serialize_dictionary(ds.dictionary))
    with open(os.path.join(out_dir, "corpus.txt"), "w", encoding="utf-8") as f:
        f.write(serialize_corpus(ds.news))
    save_bars(os.path.join(out_dir, "bars.csv"), ds.bars)
    save_index_values(os.path.join(out_dir, "index.csv"), ds.index_values)
    save_sector_map(os.path.join(out_dir, "sectors.csv"), ds.sector_map)
    save_calendar(os.path.join(out_dir, "calendar.txt"), ds.calendar)
    with open(os.path.join(out_dir, "gold.jsonl"), "w", encoding="utf-8") as f:
        for g in ds.gold:
            f.write(json.dumps({
                "doc_id": g.doc_id,
                "covered": g.covered,
                "type_id": g.type_id,
                "trigger_span": list(g.trigger_span) if g.trigger_span else None,
                "role_fills": {k: list(v) for k, v in g.role_fills.items()},
                "labels": list(g.labels),
                "movement": g.movement,
                "final_return": g.final_return,
                "bucket": g.bucket,
                "polarity": g.polarity,
                "drift_sign": g.drift_sign,
            }, sort_keys=True) + "\n")


def load_dataset(dataset_dir: str) -> SynthDataset:
    with open(os.path.join(dataset_dir, "dictionary.txt"), encoding="utf-8") as f:
        d = load_dictionary(f)
    with open(os.path.join(dataset_dir, "corpus.txt"), encoding="utf-8") as f:
        news = parse_corpus(f)
    bars = load_bars(os.path.join(dataset_dir, "bars.csv"))
    index_values = load_index_values(os.path.join(dataset_dir, "index.csv"))
    sector_map = load_sector_map(os.path.join(dataset_dir, "sectors.csv"))
    calendar = load_calendar(os.path.join(dataset_dir, "calendar.txt"))
    gold: list[GoldRecord] = []
    gold_path = os.path.join(dataset_dir, "gold.jsonl")
    if os.path.exists(gold_path):
        with open(gold_path, encoding="utf-8") as f:
            for line in f:
                obj = json.loads(line)
                gold.append(GoldRecord(
                    doc_id=obj["doc_id"],
                    covered=obj["covered"],
                    type_id=obj["type_id"],
                    trigger_span=tuple(obj["trigger_span"]) if obj["trigger_span"] else None,
                    role_fills={k: tuple(v) for k, v in obj["role_fills"].items()},
                    labels=tuple(obj["labels"]),
                    movement=obj["movement"],
                    final_return=obj["final_return"],
                    bucket=obj["bucket"],
                    polarity=obj["polarity"],
                    drift_sign=obj["drift_sign"],
                ))
    ds = SynthDataset(SynthConfig(n_samples=len(news)), d, calendar, news, gold,
                      bars, index_values, sector_map)
    ds.samples = assemble_samples(news, d, calendar, bars, index_values, sector_map)
    return ds
