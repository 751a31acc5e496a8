"""Machine-readable finance event dictionary: types, triggers, roles, patterns.

The dictionary is declared in a line-oriented text format::

    # comment
    event earnings_profit category earnings
    trigger profit
    trigger financial result
    trigger name ... as            # two anchors with a bounded gap
    role firm necessary pos {NNP,NN} path up:obj,down:nsubj span 4

    spo_subject nsubj,nsubj:pass,csubj
    spo_object obj,dobj,iobj,ccomp
    relations extra_rel

Trigger phrases are matched case-insensitively on token sequences.  A
``...`` inside a trigger separates two anchored literals that may be at
most ``MAX_TRIGGER_GAP`` tokens apart.  Role patterns are walked from the
trigger head token: ``up:rel`` climbs to the head when the current token's
incoming relation is ``rel`` (``*`` matches any), ``down:rel`` descends to
the leftmost child attached with ``rel``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, TextIO

MAX_TRIGGER_GAP = 5

SPO_LABELS = ("B-SUBJ", "I-SUBJ", "B-PRED", "I-PRED", "B-OBJ", "I-OBJ")

DEFAULT_SPO_SUBJECT = ("nsubj", "nsubj:pass", "csubj")
DEFAULT_SPO_OBJECT = ("obj", "dobj", "iobj", "ccomp")

DEFAULT_RELATIONS = frozenset(
    {
        "nsubj", "nsubj:pass", "csubj", "obj", "dobj", "iobj", "ccomp", "xcomp",
        "nmod", "obl", "obl:tmod", "amod", "advmod", "nummod", "compound",
        "case", "det", "mark", "cc", "conj", "appos", "parataxis", "acl",
        "advcl", "aux", "cop", "flat", "fixed", "punct", "dep",
    }
)

WILDCARD = "*"


class DictionaryError(ValueError):
    """Raised for malformed dictionary text; carries the offending line."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class TriggerPhrase:
    """One trigger: either a contiguous token sequence or two anchors with a gap."""

    parts: tuple[tuple[str, ...], ...]  # 1 part = contiguous, 2 parts = gapped
    max_gap: int = MAX_TRIGGER_GAP

    def text(self) -> str:
        return " ... ".join(" ".join(p) for p in self.parts)


@dataclass(frozen=True)
class RolePattern:
    """Dependency walk from the trigger head to a role head token."""

    steps: tuple[tuple[str, str], ...]  # (direction up|down, relation or "*")
    max_subtree_span: int

    def text(self) -> str:
        return ",".join(f"{d}:{r}" for d, r in self.steps)


@dataclass(frozen=True)
class EventRoleSpec:
    name: str
    necessary: bool
    pos_allowed: frozenset[str]
    pattern: RolePattern


@dataclass(frozen=True)
class EventTypeSpec:
    type_id: str
    category: str
    triggers: tuple[TriggerPhrase, ...]
    roles: tuple[EventRoleSpec, ...]

    def role(self, name: str) -> EventRoleSpec:
        for r in self.roles:
            if r.name == name:
                return r
        raise KeyError(name)

    def necessary_roles(self) -> tuple[EventRoleSpec, ...]:
        return tuple(r for r in self.roles if r.necessary)


@dataclass(frozen=True)
class EventDictionary:
    types: tuple[EventTypeSpec, ...]
    spo_subject: tuple[str, ...] = DEFAULT_SPO_SUBJECT
    spo_object: tuple[str, ...] = DEFAULT_SPO_OBJECT
    relations: frozenset[str] = DEFAULT_RELATIONS
    label_alphabet: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.label_alphabet:
            object.__setattr__(self, "label_alphabet", build_label_alphabet(self.types))

    def type(self, type_id: str) -> EventTypeSpec:
        for t in self.types:
            if t.type_id == type_id:
                return t
        raise KeyError(type_id)

    def label_id(self, label: str) -> int:
        return self.label_alphabet.index(label)

    def role_label_ids(self, type_id: str, role: str) -> tuple[int, int]:
        """(B, I) label ids for a type/role pair."""
        return (
            self.label_alphabet.index(f"B-{type_id}.{role}"),
            self.label_alphabet.index(f"I-{type_id}.{role}"),
        )

    def trigger_tokens(self) -> frozenset[str]:
        """Every token that appears in any trigger phrase (lowercase)."""
        toks = set()
        for t in self.types:
            for trig in t.triggers:
                for part in trig.parts:
                    toks.update(part)
        return frozenset(toks)


def build_label_alphabet(types: Iterable[EventTypeSpec]) -> tuple[str, ...]:
    """O first, then B/I per (type, role) sorted by type_id then role name, then S/P/O."""
    labels = ["O"]
    pairs = sorted((t.type_id, r.name) for t in types for r in t.roles)
    for type_id, role in pairs:
        labels.append(f"B-{type_id}.{role}")
        labels.append(f"I-{type_id}.{role}")
    labels.extend(SPO_LABELS)
    return tuple(labels)


def _parse_trigger(rest: list[str], line_no: int) -> TriggerPhrase:
    if not rest:
        raise DictionaryError("trigger line has no tokens", line_no)
    if "..." in rest:
        i = rest.index("...")
        before, after = rest[:i], rest[i + 1 :]
        if not before or not after or "..." in after:
            raise DictionaryError("gapped trigger needs tokens on both sides of one '...'", line_no)
        parts = (tuple(w.lower() for w in before), tuple(w.lower() for w in after))
    else:
        parts = (tuple(w.lower() for w in rest),)
    total = sum(len(p) for p in parts)
    if not 1 <= total <= 4:
        raise DictionaryError("trigger phrases carry 1-4 tokens", line_no)
    return TriggerPhrase(parts=parts)


def _parse_role(rest: list[str], line_no: int) -> EventRoleSpec:
    # role <name> necessary|optional pos {TAGS} path <dir:rel>[,...] span <n>
    if len(rest) < 7:
        raise DictionaryError("role line too short", line_no)
    name = rest[0]
    if not name:
        raise DictionaryError("role name empty", line_no)
    flag = rest[1]
    if flag not in ("necessary", "optional"):
        raise DictionaryError(f"expected necessary|optional, got {flag!r}", line_no)
    fields = dict(zip(rest[2::2], rest[3::2]))
    if set(fields) != {"pos", "path", "span"}:
        raise DictionaryError("role line needs pos {...} path ... span n", line_no)
    pos_raw = fields["pos"]
    if not (pos_raw.startswith("{") and pos_raw.endswith("}")):
        raise DictionaryError("pos set must be brace-enclosed", line_no)
    pos = frozenset(p for p in pos_raw[1:-1].split(",") if p)
    if not pos:
        raise DictionaryError("role POS set empty", line_no)
    steps = []
    for step in fields["path"].split(","):
        if ":" not in step:
            raise DictionaryError(f"bad path step {step!r}", line_no)
        direction, rel = step.split(":", 1)
        if direction not in ("up", "down"):
            raise DictionaryError(f"path direction must be up/down, got {direction!r}", line_no)
        steps.append((direction, rel))
    if not steps:
        raise DictionaryError("role path empty", line_no)
    try:
        span = int(fields["span"])
    except ValueError:
        raise DictionaryError(f"bad span {fields['span']!r}", line_no) from None
    if span < 1:
        raise DictionaryError("span must be >= 1", line_no)
    return EventRoleSpec(
        name=name,
        necessary=flag == "necessary",
        pos_allowed=pos,
        pattern=RolePattern(steps=tuple(steps), max_subtree_span=span),
    )


def load_dictionary(source: TextIO | str) -> EventDictionary:
    """Parse dictionary text; raises DictionaryError on any malformed input."""
    if isinstance(source, str):
        source = io.StringIO(source)

    types: list[EventTypeSpec] = []
    seen_ids: set[str] = set()
    cur_id = cur_cat = None
    cur_triggers: list[TriggerPhrase] = []
    cur_roles: list[EventRoleSpec] = []
    spo_subject = DEFAULT_SPO_SUBJECT
    spo_object = DEFAULT_SPO_OBJECT
    relations = set(DEFAULT_RELATIONS)
    any_content = False
    line_no = 0

    def close_type(line_no):
        nonlocal cur_id, cur_cat, cur_triggers, cur_roles
        if cur_id is None:
            return
        if not cur_triggers:
            raise DictionaryError(f"event {cur_id} has no triggers", line_no)
        if not any(r.necessary for r in cur_roles):
            raise DictionaryError(f"event {cur_id} has no necessary role", line_no)
        names = [r.name for r in cur_roles]
        if len(set(names)) != len(names):
            raise DictionaryError(f"event {cur_id} repeats a role name", line_no)
        types.append(
            EventTypeSpec(cur_id, cur_cat, tuple(cur_triggers), tuple(cur_roles))
        )
        cur_id = cur_cat = None
        cur_triggers, cur_roles = [], []

    for line_no, raw in enumerate(source, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        any_content = True
        words = line.split()
        key = words[0]
        if key == "event":
            close_type(line_no)
            if len(words) != 4 or words[2] != "category":
                raise DictionaryError("expected: event <type_id> category <cat>", line_no)
            cur_id, cur_cat = words[1], words[3]
            if cur_id in seen_ids:
                raise DictionaryError(f"duplicate type_id {cur_id!r}", line_no)
            seen_ids.add(cur_id)
        elif key == "trigger":
            if cur_id is None:
                raise DictionaryError("trigger outside event block", line_no)
            cur_triggers.append(_parse_trigger(words[1:], line_no))
        elif key == "role":
            if cur_id is None:
                raise DictionaryError("role outside event block", line_no)
            cur_roles.append(_parse_role(words[1:], line_no))
        elif key == "spo_subject":
            spo_subject = tuple(words[1].split(",")) if len(words) > 1 else ()
        elif key == "spo_object":
            spo_object = tuple(words[1].split(",")) if len(words) > 1 else ()
        elif key == "relations":
            if len(words) > 1:
                relations.update(words[1].split(","))
        else:
            raise DictionaryError(f"unknown directive {key!r}", line_no)
    close_type(line_no)

    if not any_content or not types:
        raise DictionaryError("empty dictionary source")

    d = EventDictionary(
        types=tuple(types),
        spo_subject=spo_subject,
        spo_object=spo_object,
        relations=frozenset(relations),
    )
    issues = validate_dictionary(d)
    if issues:
        raise DictionaryError("; ".join(issues))
    return d


def validate_dictionary(d: EventDictionary) -> list[str]:
    """Check every invariant; returns a list of issues (empty = valid). Never mutates."""
    issues: list[str] = []
    seen: set[str] = set()
    for t in d.types:
        where = f"event {t.type_id}"
        if not t.type_id:
            issues.append("event with empty type_id")
        if t.type_id in seen:
            issues.append(f"{where}: duplicate type_id")
        seen.add(t.type_id)
        if not t.triggers:
            issues.append(f"{where}: no triggers")
        for trig in t.triggers:
            n = sum(len(p) for p in trig.parts)
            if not 1 <= n <= 4:
                issues.append(f"{where}: trigger {trig.text()!r} not 1-4 tokens")
        if not any(r.necessary for r in t.roles):
            issues.append(f"{where}: no necessary role")
        names = set()
        for r in t.roles:
            rwhere = f"{where} role {r.name}"
            if not r.name:
                issues.append(f"{where}: role with empty name")
            if r.name in names:
                issues.append(f"{rwhere}: duplicate role name")
            names.add(r.name)
            if not r.pos_allowed:
                issues.append(f"{rwhere}: role POS set empty")
            if not r.pattern.steps:
                issues.append(f"{rwhere}: empty pattern path")
            if r.pattern.max_subtree_span < 1:
                issues.append(f"{rwhere}: span < 1")
            for direction, rel in r.pattern.steps:
                if rel != WILDCARD and rel not in d.relations:
                    issues.append(f"{rwhere}: unknown relation {rel!r}")
    if not d.label_alphabet or d.label_alphabet[0] != "O":
        issues.append("label alphabet must start with O")
    expected = build_label_alphabet(d.types)
    if d.label_alphabet != expected:
        issues.append("label alphabet inconsistent with types")
    return issues


def serialize_dictionary(d: EventDictionary) -> str:
    """Emit the dictionary in its text format; load(serialize(d)) == d."""
    out: list[str] = []
    for t in d.types:
        out.append(f"event {t.type_id} category {t.category}")
        for trig in t.triggers:
            out.append(f"trigger {trig.text()}")
        for r in t.roles:
            flag = "necessary" if r.necessary else "optional"
            pos = "{" + ",".join(sorted(r.pos_allowed)) + "}"
            out.append(
                f"role {r.name} {flag} pos {pos} path {r.pattern.text()} "
                f"span {r.pattern.max_subtree_span}"
            )
        out.append("")
    out.append("spo_subject " + ",".join(d.spo_subject))
    out.append("spo_object " + ",".join(d.spo_object))
    extra = sorted(d.relations - DEFAULT_RELATIONS)
    if extra:
        out.append("relations " + ",".join(extra))
    return "\n".join(out) + "\n"
