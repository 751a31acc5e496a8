import io

import pytest

from finevent.dictionary import (
    DictionaryError,
    EventDictionary,
    EventRoleSpec,
    EventTypeSpec,
    RolePattern,
    TriggerPhrase,
    build_label_alphabet,
    load_dictionary,
    serialize_dictionary,
    validate_dictionary,
)
from finevent.synth import load_default_dictionary

GOOD = """
event earnings_profit category earnings
trigger profit
trigger earnings
trigger financial result
role firm necessary pos {NNP,NN} path up:obj,down:nsubj span 4
role type necessary pos {NN} path down:compound span 2
role value necessary pos {CD} path down:nmod span 5
role change_rate optional pos {NN} path up:obj,down:obl span 3
role time optional pos {CD} path up:obj,down:obl:tmod span 3
"""


def test_load_earnings_profit_entry():
    d = load_dictionary(GOOD)
    t = d.type("earnings_profit")
    assert t.category == "earnings"
    assert len(t.triggers) == 3
    assert [r.name for r in t.necessary_roles()] == ["firm", "type", "value"]
    assert len(t.necessary_roles()) == 3
    assert t.role("firm").pos_allowed == {"NNP", "NN"}
    assert t.role("value").pattern.steps == (("down", "nmod"),)
    assert t.role("value").pattern.max_subtree_span == 5


def test_empty_source_is_syntax_error():
    with pytest.raises(DictionaryError):
        load_dictionary("")
    with pytest.raises(DictionaryError):
        load_dictionary("# only a comment\n")


def test_two_types_may_share_a_trigger():
    text = """
event deals category business
trigger order
role firm necessary pos {NNP} path up:obj,down:nsubj span 4

event orders_generic category business
trigger order
role who necessary pos {NNP} path up:obj,down:nsubj span 4
"""
    d = load_dictionary(text)
    assert len(d.types) == 2
    assert all(t.triggers[0].parts == (("order",),) for t in d.types)


def test_duplicate_type_id_rejected():
    text = GOOD + "\nevent earnings_profit category earnings\ntrigger x\nrole a necessary pos {NN} path down:obj span 1\n"
    with pytest.raises(DictionaryError, match="duplicate"):
        load_dictionary(text)


def test_unknown_relation_rejected():
    text = """
event e category c
trigger t
role r necessary pos {NN} path down:zorp span 2
"""
    with pytest.raises(DictionaryError, match="zorp"):
        load_dictionary(text)


def test_footer_relations_extend_the_inventory():
    text = """
event e category c
trigger t
role r necessary pos {NN} path down:zorp span 2

relations zorp
"""
    d = load_dictionary(text)
    assert "zorp" in d.relations


def test_no_necessary_role_rejected():
    text = """
event e category c
trigger t
role r optional pos {NN} path down:obj span 2
"""
    with pytest.raises(DictionaryError, match="necessary"):
        load_dictionary(text)


def test_trigger_normalized_to_lowercase():
    d = load_dictionary("event e category c\ntrigger PROFIT Up\nrole r necessary pos {NN} path down:obj span 1\n")
    assert d.types[0].triggers[0].parts == (("profit", "up"),)


def test_gapped_trigger_parsing():
    d = load_dictionary("event e category c\ntrigger name ... as\nrole r necessary pos {NN} path down:obj span 1\n")
    trig = d.types[0].triggers[0]
    assert trig.parts == (("name",), ("as",))
    assert trig.max_gap == 5


def test_validate_reports_empty_pos_set():
    role = EventRoleSpec("r", True, frozenset(), RolePattern((("down", "obj"),), 2))
    t = EventTypeSpec("e", "c", (TriggerPhrase((("t",),)),), (role,))
    d = EventDictionary(types=(t,))
    issues = validate_dictionary(d)
    assert any("POS set empty" in i for i in issues)


def test_validate_reports_no_necessary_role():
    role = EventRoleSpec("r", False, frozenset({"NN"}), RolePattern((("down", "obj"),), 2))
    t = EventTypeSpec("e", "c", (TriggerPhrase((("t",),)),), (role,))
    d = EventDictionary(types=(t,))
    assert any("no necessary role" in i for i in validate_dictionary(d))


def test_validate_clean_on_sample_dictionary():
    d = load_default_dictionary()
    assert validate_dictionary(d) == []


def test_label_alphabet_structure():
    d = load_dictionary(GOOD)
    n_roles = sum(len(t.roles) for t in d.types)
    assert d.label_alphabet[0] == "O"
    assert len(d.label_alphabet) == 1 + 2 * n_roles + 6
    assert d.label_alphabet[-6:] == ("B-SUBJ", "I-SUBJ", "B-PRED", "I-PRED", "B-OBJ", "I-OBJ")
    # sorted by type then role, B before I
    assert d.label_alphabet[1] == "B-earnings_profit.change_rate"
    assert d.label_alphabet[2] == "I-earnings_profit.change_rate"


def test_alphabet_deterministic_across_loads():
    a = load_dictionary(GOOD).label_alphabet
    b = load_dictionary(io.StringIO(GOOD)).label_alphabet
    assert a == b


def test_roundtrip_serialize_load():
    for d in (load_dictionary(GOOD), load_default_dictionary()):
        again = load_dictionary(serialize_dictionary(d))
        assert again == d


def test_alphabet_matches_builder():
    d = load_default_dictionary()
    assert d.label_alphabet == build_label_alphabet(d.types)
