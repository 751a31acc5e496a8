"""Pre-annotated news ingestion and same-day merging.

Corpus records arrive one per block, blank-line separated::

    id d001
    stock 7203
    time 2024-03-05 10:30
    tokens alphacorp<TAB>posts<TAB>record<TAB>profit
    pos NNP<TAB>VBZ<TAB>JJ<TAB>NN
    dep 1:nsubj<TAB>-1:root<TAB>3:amod<TAB>1:obj

``dep`` holds ``head:label`` pairs with 0-based head indices, ``-1`` for the
single root.  Tokenization, tagging and parsing happen upstream; this module
only checks the structural contract.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from datetime import datetime
from typing import TextIO


class CorpusError(ValueError):
    """Malformed corpus record."""

    def __init__(self, message: str, doc_id: str | None = None):
        if doc_id:
            message = f"record {doc_id}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class AnnotatedNews:
    doc_id: str
    stock_id: str
    timestamp: datetime  # minute precision
    tokens: tuple[str, ...]
    pos: tuple[str, ...]
    dep_head: tuple[int, ...]  # head index, -1 for the root
    dep_label: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def children(self, i: int) -> list[int]:
        return [j for j, h in enumerate(self.dep_head) if h == i]

    def root(self) -> int:
        return self.dep_head.index(-1)

    def subtree(self, i: int) -> list[int]:
        """Token indices of i's dependency subtree (i included), sorted."""
        out = [i]
        stack = [i]
        while stack:
            node = stack.pop()
            for j, h in enumerate(self.dep_head):
                if h == node:
                    out.append(j)
                    stack.append(j)
        return sorted(out)


def check_news(news: AnnotatedNews) -> None:
    """Raise CorpusError unless every AnnotatedNews invariant holds."""
    L = len(news.tokens)
    if L < 1:
        raise CorpusError("empty token list", news.doc_id)
    if not (len(news.pos) == len(news.dep_head) == len(news.dep_label) == L):
        raise CorpusError("token/pos/dep lists differ in length", news.doc_id)
    roots = [i for i, h in enumerate(news.dep_head) if h == -1]
    if len(roots) != 1:
        raise CorpusError(f"expected exactly one root, found {len(roots)}", news.doc_id)
    for i, h in enumerate(news.dep_head):
        if h == i:
            raise CorpusError(f"token {i} is its own head", news.doc_id)
        if not (-1 <= h < L):
            raise CorpusError(f"head index {h} out of range", news.doc_id)
    # Walking up from every token must reach the root without revisiting.
    for i in range(L):
        seen = set()
        node = i
        while node != -1:
            if node in seen:
                raise CorpusError(f"dependency cycle through token {i}", news.doc_id)
            seen.add(node)
            node = news.dep_head[node]


def _parse_block(lines: list[tuple[int, str]]) -> AnnotatedNews:
    fields: dict[str, str] = {}
    for line_no, line in lines:
        key, _, rest = line.partition(" ")
        if key not in ("id", "stock", "time", "tokens", "pos", "dep"):
            raise CorpusError(f"line {line_no}: unknown field {key!r}")
        fields[key] = rest
    missing = {"id", "stock", "time", "tokens", "pos", "dep"} - set(fields)
    if missing:
        raise CorpusError(f"missing fields {sorted(missing)}", fields.get("id"))
    doc_id = fields["id"].strip()
    try:
        ts = datetime.strptime(fields["time"].strip(), "%Y-%m-%d %H:%M")
    except ValueError:
        raise CorpusError(f"malformed timestamp {fields['time']!r}", doc_id) from None
    tokens = tuple(fields["tokens"].split("\t"))
    pos = tuple(fields["pos"].split("\t"))
    heads: list[int] = []
    labels: list[str] = []
    for pair in fields["dep"].split("\t"):
        head_s, _, label = pair.partition(":")
        try:
            heads.append(int(head_s))
        except ValueError:
            raise CorpusError(f"bad dep entry {pair!r}", doc_id) from None
        if not label:
            raise CorpusError(f"bad dep entry {pair!r}", doc_id)
        labels.append(label)
    news = AnnotatedNews(
        doc_id=doc_id,
        stock_id=fields["stock"].strip(),
        timestamp=ts,
        tokens=tokens,
        pos=pos,
        dep_head=tuple(heads),
        dep_label=tuple(labels),
    )
    check_news(news)
    return news


def parse_corpus(source: TextIO | str) -> list[AnnotatedNews]:
    """Parse blank-line separated records, preserving input order."""
    if isinstance(source, str):
        source = io.StringIO(source)
    records: list[AnnotatedNews] = []
    block: list[tuple[int, str]] = []
    for line_no, raw in enumerate(source, start=1):
        line = raw.rstrip("\n")
        if line.startswith("#"):
            continue
        if not line.strip():
            if block:
                records.append(_parse_block(block))
                block = []
            continue
        block.append((line_no, line))
    if block:
        records.append(_parse_block(block))
    return records


def serialize_corpus(records: list[AnnotatedNews]) -> str:
    blocks = []
    for n in records:
        dep = "\t".join(f"{h}:{l}" for h, l in zip(n.dep_head, n.dep_label))
        blocks.append(
            "\n".join(
                [
                    f"id {n.doc_id}",
                    f"stock {n.stock_id}",
                    f"time {n.timestamp.strftime('%Y-%m-%d %H:%M')}",
                    "tokens " + "\t".join(n.tokens),
                    "pos " + "\t".join(n.pos),
                    "dep " + dep,
                ]
            )
        )
    return "\n\n".join(blocks) + "\n"


def merge_same_day_news(records: list[AnnotatedNews]) -> list[AnnotatedNews]:
    """Concatenate same-stock, same-day records into one.

    Later fragments keep their internal structure; each later fragment's root
    is re-headed onto the first fragment's root with a ``parataxis`` arc, so
    the merged record is still a single tree.  Singletons pass through.
    """
    groups: dict[tuple[str, str], list[AnnotatedNews]] = {}
    order: list[tuple[str, str]] = []
    for r in records:
        key = (r.stock_id, r.timestamp.strftime("%Y-%m-%d"))
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(r)

    merged: list[AnnotatedNews] = []
    for key in order:
        group = sorted(groups[key], key=lambda r: (r.timestamp, r.doc_id))
        if len(group) == 1:
            merged.append(group[0])
            continue
        tokens: list[str] = []
        pos: list[str] = []
        heads: list[int] = []
        labels: list[str] = []
        first_root = -1
        for frag in group:
            offset = len(tokens)
            tokens.extend(frag.tokens)
            pos.extend(frag.pos)
            for h, lab in zip(frag.dep_head, frag.dep_label):
                if h == -1:
                    if first_root == -1:
                        first_root = offset + frag.root()
                        heads.append(-1)
                        labels.append(lab)
                    else:
                        heads.append(first_root)
                        labels.append("parataxis")
                else:
                    heads.append(h + offset)
                    labels.append(lab)
        out = AnnotatedNews(
            doc_id="+".join(f.doc_id for f in group),
            stock_id=group[0].stock_id,
            timestamp=min(f.timestamp for f in group),
            tokens=tuple(tokens),
            pos=tuple(pos),
            dep_head=tuple(heads),
            dep_label=tuple(labels),
        )
        check_news(out)
        merged.append(out)
    return merged
