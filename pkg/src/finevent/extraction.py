"""Fine-grained event extraction over dependency-annotated headlines.

Pipeline: trigger matching proposes candidates, dependency/POS matching
locates role heads, role spans come from dependency subtrees, and the result
is normalized to a BIO sequence.  Headlines no event type recognizes fall
back to a subject/predicate/object labeling derived from the root.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .corpus import AnnotatedNews
from .dictionary import EventDictionary, EventTypeSpec, RolePattern, TriggerPhrase, WILDCARD

Span = tuple[int, int]  # inclusive token index range


@dataclass(frozen=True)
class Candidate:
    """A trigger occurrence: span covers the first anchor part; anchors list
    every trigger token (gapped triggers have anchors on both sides)."""

    type_id: str
    trigger_span: Span
    anchors: tuple[int, ...]


@dataclass(frozen=True)
class EventFrame:
    type_id: str
    trigger_span: Span
    role_fills: dict[str, Span]

    def n_roles(self) -> int:
        return len(self.role_fills)


@dataclass(frozen=True)
class RoleLabelSequence:
    labels: tuple[int, ...]
    covered: bool  # True = fine-grained frame, False = S/P/O fallback

    def as_strings(self, d: EventDictionary) -> tuple[str, ...]:
        return tuple(d.label_alphabet[i] for i in self.labels)


def bio_valid(labels: tuple[int, ...], d: EventDictionary) -> bool:
    """I-x may only follow B-x or I-x; all ids inside the alphabet."""
    alphabet = d.label_alphabet
    prev = "O"
    for lid in labels:
        if not 0 <= lid < len(alphabet):
            return False
        lab = alphabet[lid]
        if lab.startswith("I-"):
            if not (prev == "B-" + lab[2:] or prev == lab):
                return False
        prev = lab
    return True


def _match_part(tokens_lower: list[str], part: tuple[str, ...], start: int) -> bool:
    if start + len(part) > len(tokens_lower):
        return False
    return all(tokens_lower[start + k] == part[k] for k in range(len(part)))


def _trigger_occurrences(tokens_lower: list[str], trig: TriggerPhrase) -> list[tuple[Span, tuple[int, ...]]]:
    hits: list[tuple[Span, tuple[int, ...]]] = []
    first = trig.parts[0]
    for i in range(len(tokens_lower) - len(first) + 1):
        if not _match_part(tokens_lower, first, i):
            continue
        first_span = (i, i + len(first) - 1)
        anchors = tuple(range(i, i + len(first)))
        if len(trig.parts) == 1:
            hits.append((first_span, anchors))
            continue
        second = trig.parts[1]
        lo = i + len(first)
        for j in range(lo, min(lo + trig.max_gap, len(tokens_lower) - len(second)) + 1):
            if _match_part(tokens_lower, second, j):
                hits.append((first_span, anchors + tuple(range(j, j + len(second)))))
                break  # nearest second anchor only
    return hits


def filter_candidates(news: AnnotatedNews, d: EventDictionary) -> list[Candidate]:
    """Step 2: every trigger occurrence of every type, ordered by position then type."""
    tokens_lower = [t.lower() for t in news.tokens]
    found: list[Candidate] = []
    seen: set[tuple[str, tuple[int, ...]]] = set()
    for etype in d.types:
        for trig in etype.triggers:
            for span, anchors in _trigger_occurrences(tokens_lower, trig):
                key = (etype.type_id, anchors)
                if key not in seen:
                    seen.add(key)
                    found.append(Candidate(etype.type_id, span, anchors))
    found.sort(key=lambda c: (c.trigger_span[0], c.type_id, c.anchors))
    return found


def _trigger_head(news: AnnotatedNews, anchors: tuple[int, ...]) -> int:
    """The anchor token not dominated by another anchor (leftmost on ties)."""
    anchor_set = set(anchors)
    undominated = []
    for a in anchors:
        node = news.dep_head[a]
        dominated = False
        while node != -1:
            if node in anchor_set:
                dominated = True
                break
            node = news.dep_head[node]
        if not dominated:
            undominated.append(a)
    return min(undominated) if undominated else anchors[0]


def _walk_pattern(news: AnnotatedNews, start: int, pattern: RolePattern) -> int | None:
    cur = start
    for direction, rel in pattern.steps:
        if direction == "up":
            if rel != WILDCARD and news.dep_label[cur] != rel:
                return None
            cur = news.dep_head[cur]
            if cur == -1:
                return None
        else:
            matches = [
                j
                for j, (h, lab) in enumerate(zip(news.dep_head, news.dep_label))
                if h == cur and (rel == WILDCARD or lab == rel)
            ]
            if not matches:
                return None
            cur = min(matches)
    return cur


def _contiguous_run(members: list[int], head: int, blocked: set[int]) -> tuple[int, int]:
    """Longest run of consecutive member indices through head, stopping at
    blocked tokens (trigger anchors)."""
    member_set = set(members) - blocked
    lo = hi = head
    while lo - 1 in member_set:
        lo -= 1
    while hi + 1 in member_set:
        hi += 1
    return lo, hi


def _cap_span(lo: int, hi: int, head: int, cap: int) -> Span:
    """Shrink to at most cap tokens, dropping the end farther from the head
    (ties drop the right end)."""
    while hi - lo + 1 > cap:
        if head - lo > hi - head:
            lo += 1
        else:
            hi -= 1
    return lo, hi


def role_span(news: AnnotatedNews, head: int, cap: int, blocked: set[int]) -> Span:
    run_lo, run_hi = _contiguous_run(news.subtree(head), head, blocked)
    return _cap_span(run_lo, run_hi, head, cap)


def locate_roles(news: AnnotatedNews, cand: Candidate, d: EventDictionary) -> EventFrame | None:
    """Step 3: match role patterns and POS; returns a frame only when every
    necessary role survives."""
    etype = d.type(cand.type_id)
    anchors = set(cand.anchors)
    head_tok = _trigger_head(news, cand.anchors)

    fills: dict[str, Span] = {}
    claimed: set[int] = set()
    for role in etype.roles:
        node = _walk_pattern(news, head_tok, role.pattern)
        ok = (
            node is not None
            and node not in anchors
            and news.pos[node] in role.pos_allowed
        )
        if ok:
            span = role_span(news, node, role.pattern.max_subtree_span, anchors)
            overlap = any(i in claimed for i in range(span[0], span[1] + 1))
            if overlap:
                ok = False  # later-matched role discarded
            else:
                claimed.update(range(span[0], span[1] + 1))
                fills[role.name] = span
        if not ok and role.necessary:
            return None
    return EventFrame(cand.type_id, cand.trigger_span, fills)


def to_bio(frame: EventFrame, L: int, d: EventDictionary) -> RoleLabelSequence:
    """Step 4: B-type.role at span starts, I-type.role inside, O elsewhere."""
    if not frame.role_fills:
        raise ValueError("frame without role fills")
    labels = [0] * L
    for name, (s, e) in frame.role_fills.items():
        if not (0 <= s <= e < L):
            raise ValueError(f"role {name} span ({s},{e}) out of bounds for L={L}")
        b_id, i_id = d.role_label_ids(frame.type_id, name)
        labels[s] = b_id
        for i in range(s + 1, e + 1):
            labels[i] = i_id
    return RoleLabelSequence(tuple(labels), covered=True)


def extract_spo(news: AnnotatedNews, d: EventDictionary) -> RoleLabelSequence:
    """Coarse fallback: predicate = root token, subject/object = subtrees of
    the root's first subject-/object-labeled children."""
    subj_labels = d.spo_subject
    obj_labels = d.spo_object
    base = len(d.label_alphabet) - 6  # SPO block is always the alphabet tail

    root = news.root()
    labels = [0] * len(news)
    labels[root] = base + 2  # B-PRED

    def fill(child: int, b_off: int, i_off: int, blocked: set[int]):
        lo, hi = _contiguous_run(news.subtree(child), child, blocked)
        labels[lo] = base + b_off
        for i in range(lo + 1, hi + 1):
            labels[i] = base + i_off
        return set(range(lo, hi + 1))

    blocked = {root}
    subj = [j for j in news.children(root) if news.dep_label[j] in subj_labels]
    if subj:
        blocked |= fill(min(subj), 0, 1, blocked)
    obj = [j for j in news.children(root) if news.dep_label[j] in obj_labels]
    if obj:
        fill(min(obj), 4, 5, blocked)
    return RoleLabelSequence(tuple(labels), covered=False)


@dataclass
class ExtractionResult:
    sequence: RoleLabelSequence
    frame: EventFrame | None = None
    discarded: list[EventFrame] = field(default_factory=list)


def extract_detailed(news: AnnotatedNews, d: EventDictionary) -> ExtractionResult:
    """Full pipeline with the multi-frame tie-break and a discard side channel."""
    frames = []
    for cand in filter_candidates(news, d):
        frame = locate_roles(news, cand, d)
        if frame is not None:
            frames.append(frame)
    if not frames:
        return ExtractionResult(extract_spo(news, d))
    # Most roles filled, then earliest trigger, then type_id.
    frames.sort(key=lambda f: (-f.n_roles(), f.trigger_span[0], f.type_id))
    best = frames[0]
    return ExtractionResult(to_bio(best, len(news), d), best, frames[1:])


def extract(news: AnnotatedNews, d: EventDictionary) -> RoleLabelSequence:
    return extract_detailed(news, d).sequence


def coverage_stats(corpus: list[AnnotatedNews], d: EventDictionary) -> float:
    """Fraction of records any event type covers; 0.0 for an empty corpus."""
    if not corpus:
        return 0.0
    covered = sum(1 for n in corpus if extract(n, d).covered)
    return covered / len(corpus)
