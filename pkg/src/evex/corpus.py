"""Sentence/entity/event data model, corpus IO, typed graphs, BIO codecs.

Corpus files are UTF-8 JSON-lines: one sentence object per line with keys
``tokens`` (form/pos/head/deprel, head -1 meaning ROOT), ``entities``
(start/end exclusive/type) and ``events`` (trigger span, subtype, args).
Everything is validated on load; a malformed record fails loudly with its
line number and field path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

ROOT = -1

ALONG = "along"
REV = "rev"
LOOP = "loop"
EDGE_LABELS = (ALONG, REV, LOOP)

OTHER_ROLE = "OTHER"

# The 33 event subtypes and 36 argument roles of the standard annotation
# scheme; with BIO tags plus O that yields the 67-way trigger space and the
# 37-way role space.
EVENT_SUBTYPES = (
    "Be-Born", "Marry", "Divorce", "Injure", "Die",
    "Transport",
    "Transfer-Ownership", "Transfer-Money",
    "Start-Org", "Merge-Org", "Declare-Bankruptcy", "End-Org",
    "Attack", "Demonstrate",
    "Meet", "Phone-Write",
    "Start-Position", "End-Position", "Nominate", "Elect",
    "Arrest-Jail", "Release-Parole", "Trial-Hearing", "Charge-Indict",
    "Sue", "Convict", "Sentence", "Fine", "Execute", "Extradite",
    "Acquit", "Appeal", "Pardon",
)

ARGUMENT_ROLES = (
    "Person", "Place", "Buyer", "Seller", "Beneficiary", "Price",
    "Artifact", "Origin", "Destination", "Giver", "Recipient", "Money",
    "Org", "Agent", "Victim", "Instrument", "Entity", "Attacker",
    "Target", "Defendant", "Adjudicator", "Prosecutor", "Plaintiff",
    "Crime", "Position", "Sentence", "Vehicle", "Time",
    "Time-Within", "Time-Starting", "Time-Ending", "Time-Before",
    "Time-After", "Time-Holds", "Time-At-Beginning", "Time-At-End",
)

ENTITY_TYPES = ("PER", "ORG", "GPE", "LOC", "FAC", "VEH", "WEA")

DEFAULT_POS_TAGS = (
    "NOUN", "VERB", "PROPN", "ADJ", "ADV", "ADP", "DET",
    "NUM", "PRON", "CCONJ", "SCONJ", "PART", "PUNCT", "X",
)

PAD_WORD = "<pad>"
UNK_WORD = "<unk>"


class CorpusError(ValueError):
    """Malformed or invariant-violating corpus content."""


@dataclass(frozen=True)
class Token:
    form: str
    pos: str
    head: int          # index of the head token, or ROOT (-1)
    deprel: str


@dataclass(frozen=True)
class EntityMention:
    start: int
    end: int           # exclusive
    entity_type: str


@dataclass(frozen=True)
class EventMention:
    trigger_start: int
    trigger_end: int   # exclusive
    subtype: str
    arguments: tuple   # of (entity index, role string)


@dataclass(frozen=True)
class Sentence:
    tokens: tuple
    entities: tuple
    events: tuple

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class TypedGraph:
    """Per-sentence edge list over token nodes.

    Every dependency arc head->dep contributes one ``along`` edge in arc
    direction and one ``rev`` edge against it; every node carries a ``loop``
    edge. ROOT is not a node, so ROOT attachments contribute nothing.
    """

    n: int
    edges: tuple       # of (source, target, label)


def validate_sentence(sentence: Sentence, where: str = "sentence") -> None:
    n = len(sentence.tokens)
    if n < 1:
        raise CorpusError(f"{where}: empty token list")
    for i, tok in enumerate(sentence.tokens):
        if tok.head == i:
            raise CorpusError(f"{where}.tokens[{i}].head: token is its own head")
        if tok.head != ROOT and not 0 <= tok.head < n:
            raise CorpusError(f"{where}.tokens[{i}].head: {tok.head} outside [0, {n})")
    # Head chains must all terminate at ROOT (i.e. the arcs form a forest).
    for i in range(n):
        seen = set()
        j = i
        while j != ROOT:
            if j in seen:
                raise CorpusError(f"{where}.tokens[{i}].head: cycle in head chain")
            seen.add(j)
            j = sentence.tokens[j].head
    for k, ent in enumerate(sentence.entities):
        if not 0 <= ent.start < ent.end <= n:
            raise CorpusError(f"{where}.entities[{k}]: bad span [{ent.start}, {ent.end}) for length {n}")
    for k, ev in enumerate(sentence.events):
        if not 0 <= ev.trigger_start < ev.trigger_end <= n:
            raise CorpusError(
                f"{where}.events[{k}].trigger: bad span [{ev.trigger_start}, {ev.trigger_end})"
            )
        seen_args = set()
        for entity_idx, role in ev.arguments:
            if not 0 <= entity_idx < len(sentence.entities):
                raise CorpusError(f"{where}.events[{k}].args: entity index {entity_idx} out of range")
            if (entity_idx, role) in seen_args:
                raise CorpusError(f"{where}.events[{k}].args: duplicate (entity {entity_idx}, {role})")
            seen_args.add((entity_idx, role))


def sentence_to_record(sentence: Sentence) -> dict:
    return {
        "tokens": [
            {"form": t.form, "pos": t.pos, "head": t.head, "deprel": t.deprel}
            for t in sentence.tokens
        ],
        "entities": [
            {"start": e.start, "end": e.end, "type": e.entity_type}
            for e in sentence.entities
        ],
        "events": [
            {
                "trigger": {"start": ev.trigger_start, "end": ev.trigger_end},
                "subtype": ev.subtype,
                "args": [{"entity": ei, "role": r} for ei, r in ev.arguments],
            }
            for ev in sentence.events
        ],
    }


def record_to_sentence(record: dict, where: str = "record") -> Sentence:
    try:
        tokens = tuple(
            Token(t["form"], t["pos"], int(t["head"]), t["deprel"])
            for t in record["tokens"]
        )
        entities = tuple(
            EntityMention(int(e["start"]), int(e["end"]), e["type"])
            for e in record["entities"]
        )
        events = tuple(
            EventMention(
                int(ev["trigger"]["start"]),
                int(ev["trigger"]["end"]),
                ev["subtype"],
                tuple((int(a["entity"]), a["role"]) for a in ev["args"]),
            )
            for ev in record["events"]
        )
    except (KeyError, TypeError) as exc:
        raise CorpusError(f"{where}: missing or malformed field ({exc})") from None
    sentence = Sentence(tokens, entities, events)
    validate_sentence(sentence, where)
    return sentence


def load_corpus(path) -> list:
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            sentences.append(record_to_sentence(record, where=f"{path}:{lineno}"))
    return sentences


def dump_corpus(sentences: Iterable[Sentence]) -> str:
    return "".join(
        json.dumps(sentence_to_record(s), ensure_ascii=False) + "\n" for s in sentences
    )


def save_corpus(sentences: Iterable[Sentence], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_corpus(sentences))


# ---------------------------------------------------------------------------
# typed syntactic graph
# ---------------------------------------------------------------------------

def build_typed_graph(sentence: Sentence) -> TypedGraph:
    n = len(sentence.tokens)
    edges = []
    for dep, tok in enumerate(sentence.tokens):
        if tok.head == ROOT:
            continue
        edges.append((tok.head, dep, ALONG))
        edges.append((dep, tok.head, REV))
    for i in range(n):
        edges.append((i, i, LOOP))
    return TypedGraph(n, tuple(edges))


# ---------------------------------------------------------------------------
# label catalog and BIO codecs
# ---------------------------------------------------------------------------

class LabelCatalog:
    """Dense id spaces for every symbol the model embeds or predicts.

    Trigger tags are O plus B-/I- per event subtype (67 with the standard 33
    subtypes); roles are OTHER plus the 36 argument roles (37). The word
    vocabulary always holds PAD at id 0 and UNK at id 1.
    """

    def __init__(self, words: Sequence[str], pos_tags: Sequence[str] = DEFAULT_POS_TAGS,
                 subtypes: Sequence[str] = EVENT_SUBTYPES, roles: Sequence[str] = ARGUMENT_ROLES,
                 entity_types: Sequence[str] = ENTITY_TYPES):
        self.subtypes = tuple(subtypes)
        self.trigger_tags = ("O",) + tuple(
            tag for sub in self.subtypes for tag in (f"B-{sub}", f"I-{sub}")
        )
        self.tag_index = {t: i for i, t in enumerate(self.trigger_tags)}
        self.roles = (OTHER_ROLE,) + tuple(roles)
        self.role_index = {r: i for i, r in enumerate(self.roles)}
        self.entity_types = tuple(entity_types)
        self.entity_bio = tuple(
            tag for et in self.entity_types for tag in (f"B-{et}", f"I-{et}")
        )
        self.entity_bio_index = {t: i for i, t in enumerate(self.entity_bio)}
        self.pos_tags = tuple(pos_tags)
        self.pos_index = {p: i for i, p in enumerate(self.pos_tags)}
        vocab = [PAD_WORD, UNK_WORD]
        seen = set(vocab)
        for w in words:
            if w not in seen:
                vocab.append(w)
                seen.add(w)
        self.words = tuple(vocab)
        self.word_index = {w: i for i, w in enumerate(self.words)}

    @property
    def o_tag(self) -> int:
        return 0

    @property
    def other_role(self) -> int:
        return 0

    def word_id(self, form: str) -> int:
        return self.word_index.get(form, self.word_index[UNK_WORD])

    def pos_id(self, pos: str) -> int:
        return self.pos_index.get(pos, self.pos_index.get("X", 0))

    @classmethod
    def from_corpus(cls, sentences: Iterable[Sentence], **kwargs) -> "LabelCatalog":
        words = []
        for s in sentences:
            for t in s.tokens:
                words.append(t.form)
        return cls(words, **kwargs)

    def save(self, directory) -> None:
        import os

        os.makedirs(directory, exist_ok=True)
        for name, items in (
            ("words.txt", self.words),
            ("pos.txt", self.pos_tags),
            ("subtypes.txt", self.subtypes),
            ("roles.txt", self.roles[1:]),          # OTHER is implicit at id 0
            ("entity_types.txt", self.entity_types),
        ):
            with open(os.path.join(directory, name), "w", encoding="utf-8") as fh:
                fh.write("\n".join(items) + "\n")

    @classmethod
    def load(cls, directory) -> "LabelCatalog":
        import os

        def read(name):
            with open(os.path.join(directory, name), encoding="utf-8") as fh:
                return [line.rstrip("\n") for line in fh if line.strip()]

        words = [w for w in read("words.txt") if w not in (PAD_WORD, UNK_WORD)]
        return cls(
            words,
            pos_tags=read("pos.txt"),
            subtypes=read("subtypes.txt"),
            roles=read("roles.txt"),
            entity_types=read("entity_types.txt"),
        )


def encode_trigger_bio(sentence: Sentence, catalog: LabelCatalog) -> list:
    """Gold trigger tags, one id per token; rejects overlapping triggers."""
    n = len(sentence.tokens)
    tags = [catalog.o_tag] * n
    claimed = [False] * n
    for ev in sentence.events:
        for i in range(ev.trigger_start, ev.trigger_end):
            if claimed[i]:
                raise CorpusError(f"overlapping trigger spans at token {i}")
            claimed[i] = True
        tags[ev.trigger_start] = catalog.tag_index[f"B-{ev.subtype}"]
        for i in range(ev.trigger_start + 1, ev.trigger_end):
            tags[i] = catalog.tag_index[f"I-{ev.subtype}"]
    return tags


def decode_trigger_spans(tags, catalog: LabelCatalog) -> list:
    """Total BIO decoder: returns (start, end, subtype) spans.

    A span closes at O, at any B-, at an I- of a different subtype, or at the
    end of the sequence. An orphan I- (no compatible open span) opens a new
    span rather than being dropped.
    """
    tags = list(tags)
    spans = []
    open_start = None
    open_subtype = None

    def close(end):
        nonlocal open_start, open_subtype
        if open_start is not None:
            spans.append((open_start, end, open_subtype))
            open_start = None
            open_subtype = None

    for i, tag_id in enumerate(tags):
        tag = catalog.trigger_tags[tag_id]
        if tag == "O":
            close(i)
            continue
        marker, subtype = tag.split("-", 1)
        if marker == "B":
            close(i)
            open_start, open_subtype = i, subtype
        else:  # I-
            if open_subtype != subtype:
                close(i)
                open_start, open_subtype = i, subtype
    close(len(tags))
    return spans


def encode_entity_bio(sentence: Sentence, catalog: LabelCatalog) -> list:
    """Per-token frozenset of entity BIO tag ids; overlapping mentions stack."""
    sets = [set() for _ in sentence.tokens]
    for ent in sentence.entities:
        sets[ent.start].add(catalog.entity_bio_index[f"B-{ent.entity_type}"])
        for i in range(ent.start + 1, ent.end):
            sets[i].add(catalog.entity_bio_index[f"I-{ent.entity_type}"])
    return [frozenset(s) for s in sets]


# ---------------------------------------------------------------------------
# evaluation splits
# ---------------------------------------------------------------------------

def split_single_multi(sentences: Sequence[Sentence]):
    """Indices of sentences with exactly one gold trigger vs two or more.

    Zero-trigger sentences land in neither bucket.
    """
    single, multi = [], []
    for i, s in enumerate(sentences):
        if len(s.events) == 1:
            single.append(i)
        elif len(s.events) >= 2:
            multi.append(i)
    return single, multi


def split_single_multi_arguments(sentences: Sequence[Sentence], by_events: bool = False):
    """Same bucketing for the argument stage.

    Default counts gold argument slots per sentence (one argument playing a
    role = 1/1); ``by_events`` switches to counting events instead.
    """
    single, multi = [], []
    for i, s in enumerate(sentences):
        count = len(s.events) if by_events else sum(len(ev.arguments) for ev in s.events)
        if count == 1:
            single.append(i)
        elif count >= 2:
            multi.append(i)
    return single, multi
