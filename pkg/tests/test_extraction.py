from datetime import datetime

import pytest

from finevent.corpus import AnnotatedNews
from finevent.dictionary import load_dictionary
from finevent.extraction import (
    EventFrame,
    bio_valid,
    coverage_stats,
    extract,
    extract_detailed,
    extract_spo,
    filter_candidates,
    locate_roles,
    to_bio,
)
from finevent.synth import SynthConfig, generate, load_default_dictionary

DICT = """
event earnings_profit category earnings
trigger profit
role firm necessary pos {NNP} path up:obj,down:nsubj span 4
role type necessary pos {NN} path down:compound span 2
role value necessary pos {CD} path down:nmod span 5
role time optional pos {CD} path up:obj,down:obl:tmod span 3
"""


def news(tokens, pos, deps, doc_id="t", stock="s"):
    heads, labels = zip(*(d.split(":", 1) for d in deps))
    return AnnotatedNews(
        doc_id=doc_id,
        stock_id=stock,
        timestamp=datetime(2024, 3, 5, 10, 30),
        tokens=tuple(tokens),
        pos=tuple(pos),
        dep_head=tuple(int(h) for h in heads),
        dep_label=tuple(labels),
    )


# alphacorp posts group profit of 120 million yen in 2025
PROFIT_TOKENS = "alphacorp posts group profit of 120 million yen in 2025".split()
PROFIT_POS = ["NNP", "VBZ", "NN", "NN", "IN", "CD", "CD", "NN", "IN", "CD"]
PROFIT_DEPS = ["1:nsubj", "-1:root", "3:compound", "1:obj", "5:case", "3:nmod",
               "5:compound", "5:compound", "9:case", "1:obl:tmod"]


def profit_news(**kw):
    return news(PROFIT_TOKENS, PROFIT_POS, PROFIT_DEPS, **kw)


def test_filter_candidates_finds_trigger():
    d = load_dictionary(DICT)
    cands = filter_candidates(profit_news(), d)
    assert len(cands) == 1
    assert cands[0].type_id == "earnings_profit"
    assert cands[0].trigger_span == (3, 3)


def test_filter_candidates_empty_without_trigger():
    d = load_dictionary(DICT)
    n = news(["alpha", "rises"], ["NNP", "VBZ"], ["1:nsubj", "-1:root"])
    assert filter_candidates(n, d) == []


def test_shared_trigger_yields_both_types():
    d = load_dictionary("""
event deals category business
trigger order
role firm necessary pos {NNP} path up:obj,down:nsubj span 4

event procurement category business
trigger order
role who necessary pos {NNP} path up:obj,down:nsubj span 4
""")
    n = news(
        ["alphacorp", "wins", "order"],
        ["NNP", "VBZ", "NN"],
        ["1:nsubj", "-1:root", "1:obj"],
    )
    cands = filter_candidates(n, d)
    assert [(c.type_id, c.trigger_span) for c in cands] == [
        ("deals", (2, 2)),
        ("procurement", (2, 2)),
    ]


def test_locate_roles_full_frame():
    d = load_dictionary(DICT)
    cand = filter_candidates(profit_news(), d)[0]
    frame = locate_roles(profit_news(), cand, d)
    assert frame is not None
    assert frame.role_fills == {
        "firm": (0, 0),
        "type": (2, 2),
        "value": (4, 7),
        "time": (8, 9),
    }


def test_locate_roles_pos_mismatch_kills_frame():
    d = load_dictionary(DICT)
    pos = list(PROFIT_POS)
    pos[5] = "NN"  # value head no longer CD
    n = news(PROFIT_TOKENS, pos, PROFIT_DEPS)
    cand = filter_candidates(n, d)[0]
    assert locate_roles(n, cand, d) is None


def test_locate_roles_optional_role_absent():
    d = load_dictionary(DICT)
    n = news(PROFIT_TOKENS[:8], PROFIT_POS[:8], PROFIT_DEPS[:8])
    cand = filter_candidates(n, d)[0]
    frame = locate_roles(n, cand, d)
    assert frame is not None
    assert "time" not in frame.role_fills
    assert set(frame.role_fills) == {"firm", "type", "value"}


def test_to_bio_hand_example():
    d = load_dictionary("""
event ep category earnings
trigger profit
role firm necessary pos {NNP} path up:obj,down:nsubj span 4
role value necessary pos {CD} path down:nmod span 5
""")
    frame = EventFrame("ep", (3, 3), {"firm": (0, 1), "value": (5, 6)})
    seq = to_bio(frame, 8, d)
    want = ["B-ep.firm", "I-ep.firm", "O", "O", "O", "B-ep.value", "I-ep.value", "O"]
    assert list(seq.as_strings(d)) == want
    assert seq.covered


def test_to_bio_rejects_empty_frame():
    d = load_dictionary(DICT)
    with pytest.raises(ValueError):
        to_bio(EventFrame("earnings_profit", (0, 0), {}), 4, d)


def test_to_bio_rejects_out_of_bounds():
    d = load_dictionary(DICT)
    with pytest.raises(ValueError, match="out of bounds"):
        to_bio(EventFrame("earnings_profit", (0, 0), {"firm": (2, 5)}), 4, d)


def test_to_bio_single_token_role():
    d = load_dictionary(DICT)
    seq = to_bio(EventFrame("earnings_profit", (1, 1), {"firm": (0, 0)}), 3, d)
    strs = seq.as_strings(d)
    assert strs[0] == "B-earnings_profit.firm"
    assert "I-earnings_profit.firm" not in strs


def test_extract_spo_simple_triple():
    d = load_dictionary(DICT)
    n = news(["alpha", "acquires", "beta"], ["NNP", "VBZ", "NNP"],
             ["1:nsubj", "-1:root", "1:obj"])
    seq = extract_spo(n, d)
    assert list(seq.as_strings(d)) == ["B-SUBJ", "B-PRED", "B-OBJ"]
    assert not seq.covered


def test_extract_spo_nominal_root_only_pred():
    d = load_dictionary(DICT)
    n = news(["market", "outlook"], ["NN", "NN"], ["1:compound", "-1:root"])
    seq = extract_spo(n, d)
    assert list(seq.as_strings(d)) == ["O", "B-PRED"]


def test_extract_spo_multi_token_subject():
    d = load_dictionary(DICT)
    n = news(["big", "alpha", "acquires", "beta"], ["JJ", "NNP", "VBZ", "NNP"],
             ["1:amod", "2:nsubj", "-1:root", "2:obj"])
    seq = extract_spo(n, d)
    assert list(seq.as_strings(d)) == ["B-SUBJ", "I-SUBJ", "B-PRED", "B-OBJ"]


def test_extract_covered_and_fallbacks():
    d = load_dictionary(DICT)
    assert extract(profit_news(), d).covered
    # trigger present but necessary role (value) unmatched -> S/P/O fallback
    deps = list(PROFIT_DEPS)
    deps[5] = "1:obl"  # value no longer nmod of profit
    n = news(PROFIT_TOKENS, PROFIT_POS, deps)
    seq = extract(n, d)
    assert not seq.covered
    assert "B-PRED" in seq.as_strings(d)
    # no trigger at all -> fallback
    n2 = news(["alpha", "rises"], ["NNP", "VBZ"], ["1:nsubj", "-1:root"])
    assert not extract(n2, d).covered


def test_extract_deterministic():
    d = load_dictionary(DICT)
    n = profit_news()
    assert extract(n, d) == extract(n, d)


def test_tiebreak_prefers_most_roles_then_type_id():
    d = load_dictionary("""
event zeta category business
trigger order
role firm necessary pos {NNP} path up:obj,down:nsubj span 4
role product necessary pos {NN} path down:compound span 3

event alpha category business
trigger order
role who necessary pos {NNP} path up:obj,down:nsubj span 4
""")
    n = news(
        ["alphacorp", "wins", "sensor", "order"],
        ["NNP", "VBZ", "NN", "NN"],
        ["1:nsubj", "-1:root", "3:compound", "1:obj"],
    )
    res = extract_detailed(n, d)
    # zeta fills two roles, alpha only one -> zeta wins despite later type_id
    assert res.frame.type_id == "zeta"
    assert [f.type_id for f in res.discarded] == ["alpha"]
    # with the product removed both fill one role; lexicographic type_id wins
    n2 = news(["alphacorp", "wins", "order"], ["NNP", "VBZ", "NN"],
              ["1:nsubj", "-1:root", "1:obj"])
    assert extract_detailed(n2, d).frame.type_id == "alpha"


def test_gapped_trigger_and_anchor_clipping():
    d = load_dictionary("""
event personnel category affairs
trigger names ... as
role who necessary pos {NNP} path down:nsubj span 4
role person necessary pos {NNP} path down:obj span 3
role title necessary pos {NN} path down:obl span 2
""")
    n = news(
        ["betainc", "names", "john", "smith", "as", "ceo"],
        ["NNP", "VBZ", "NNP", "NNP", "IN", "NN"],
        ["1:nsubj", "-1:root", "1:obj", "2:flat", "5:case", "1:obl"],
    )
    res = extract_detailed(n, d)
    assert res.frame is not None
    # the "as" anchor is clipped out of the title span
    assert res.frame.role_fills == {"who": (0, 0), "person": (2, 3), "title": (5, 5)}


def test_coverage_stats_planted_fraction():
    ds = generate(SynthConfig(n_samples=40, p_covered=0.7, seed=5))
    assert coverage_stats(ds.news, ds.dictionary) == pytest.approx(28 / 40, abs=0)
    flat = generate(SynthConfig(n_samples=10, p_covered=0.0, seed=5))
    assert coverage_stats(flat.news, flat.dictionary) == 0.0
    full = generate(SynthConfig(n_samples=10, p_covered=1.0, seed=5))
    assert coverage_stats(full.news, full.dictionary) == 1.0
    assert coverage_stats([], ds.dictionary) == 0.0


def test_generator_corpus_gold_match_and_bio_validity():
    ds = generate(SynthConfig(n_samples=120, p_covered=0.6, seed=9, n_distractors=1))
    d = ds.dictionary
    for sample, gold in zip(ds.samples, ds.gold):
        seq = extract(sample.news, d)
        assert seq.covered == gold.covered
        assert tuple(seq.labels) == gold.labels
        assert bio_valid(seq.labels, d)
        if gold.covered:
            res = extract_detailed(sample.news, d)
            assert res.frame.type_id == gold.type_id
            assert res.frame.trigger_span == gold.trigger_span
            assert res.frame.role_fills == gold.role_fills


def test_default_dictionary_meets_size_floor():
    d = load_default_dictionary()
    assert len(d.types) >= 8
    assert len({t.category for t in d.types}) >= 4
