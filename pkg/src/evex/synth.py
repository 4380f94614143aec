"""Synthetic event corpora with controllable multi-event statistics.

Sentences are built from clause templates: every event contributes one clause
whose head is the trigger word; extra clauses coordinate to the first clause's
trigger, so co-occurring triggers sit one arc apart no matter how far apart
they are linearly. Trigger lemmas correlate with subtypes, and a configurable
co-occurrence table drives which subtypes appear together.

A few lemmas are deliberately ambiguous between two subtypes. Their true
subtype is determined by the event they coordinate with (the graph anchor),
never by clause-internal material, which makes multi-event disambiguation a
structural problem rather than a lexical one.

The generative process is simple enough that the exact conditional
co-occurrence matrix is computable in closed form (``cooccurrence_truth``):
a sentence holds one event with probability 1 - multi_event_rate, otherwise
two or three events whose extra subtypes are drawn independently from the
table row of the first (anchor) subtype.
"""

from __future__ import annotations

import numpy as np

from .corpus import (
    ENTITY_TYPES,
    EVENT_SUBTYPES,
    EntityMention,
    EventMention,
    Sentence,
    Token,
)

DEFAULT_MULTI_EVENT_RATE = 0.262
DEFAULT_THREE_EVENT_SHARE = 0.2
DEFAULT_AMBIGUOUS_SHARE = 0.65

_NOUNS = {
    "PER": ("soldiers", "protesters", "workers", "journalists", "villagers",
            "officials", "lawyers", "students", "officers", "rebels",
            "engineers", "farmers", "doctors", "migrants", "executives"),
    "ORG": ("company", "court", "army", "senate", "agency", "union",
            "bank", "ministry", "parliament", "committee"),
    "GPE": ("baghdad", "london", "texas", "tehran", "paris", "moscow",
            "cairo", "berlin", "kabul", "sydney"),
    "FAC": ("airport", "prison", "bridge", "stadium", "harbor"),
    "VEH": ("convoy", "tanker", "helicopter", "truck"),
    "WEA": ("missiles", "rifles", "mortars"),
    "LOC": ("border", "valley", "coast"),
}

# Nested mentions: an ORG phrase containing a GPE token, so some tokens carry
# two entity BIO tags at once.
_NESTED_ORG_CITIES = ("baghdad", "london", "paris", "berlin")
_NESTED_ORG_HEADS = ("council", "exchange", "tribunal")

_NUMS = ("two", "three", "four", "five", "six")
_ADVERBS = ("reportedly", "suddenly", "finally", "quietly", "officially", "again")
_DAYS = ("monday", "tuesday", "friday", "sunday", "yesterday")


class _Frame:
    __slots__ = ("triggers", "subject", "obj", "pp")

    def __init__(self, triggers, subject, obj=None, pp=None):
        self.triggers = triggers    # tuples of trigger tokens (1 or 2)
        self.subject = subject      # (role, entity type)
        self.obj = obj              # (role, entity type) or None
        self.pp = pp                # (adposition, role, entity type) or None


FRAMES = {
    "Be-Born": _Frame((("born",),), ("Person", "PER"), pp=("in", "Place", "GPE")),
    "Marry": _Frame((("married",), ("wed",)), ("Person", "PER"), obj=("Person", "PER")),
    "Divorce": _Frame((("divorced",),), ("Person", "PER"), obj=("Person", "PER")),
    "Injure": _Frame((("wounded",), ("injured",)), ("Agent", "PER"), obj=("Victim", "PER"),
                     pp=("in", "Place", "GPE")),
    "Die": _Frame((("died",), ("perished",), ("passed", "away")), ("Victim", "PER"),
                  pp=("in", "Place", "GPE")),
    "Transport": _Frame((("traveled",), ("headed",), ("marched",)), ("Artifact", "PER"),
                        pp=("to", "Destination", "GPE")),
    "Transfer-Ownership": _Frame((("sold",), ("acquired",)), ("Seller", "ORG"),
                                 obj=("Artifact", "VEH"), pp=("to", "Buyer", "ORG")),
    "Transfer-Money": _Frame((("paid",), ("donated",)), ("Giver", "ORG"),
                             pp=("to", "Recipient", "PER")),
    "Start-Org": _Frame((("founded",), ("launched",)), ("Agent", "PER"), obj=("Org", "ORG")),
    "Merge-Org": _Frame((("merged",),), ("Org", "ORG"), pp=("with", "Org", "ORG")),
    "Declare-Bankruptcy": _Frame((("collapsed",), ("went", "bankrupt")), ("Org", "ORG")),
    "End-Org": _Frame((("dissolved",), ("folded",)), ("Org", "ORG")),
    "Attack": _Frame((("attacked",), ("bombed",), ("raided",), ("struck",)),
                     ("Attacker", "PER"), obj=("Target", "FAC"), pp=("in", "Place", "GPE")),
    "Demonstrate": _Frame((("protested",), ("rallied",)), ("Entity", "PER"),
                          pp=("in", "Place", "GPE")),
    "Meet": _Frame((("met",), ("gathered",)), ("Entity", "PER"), obj=("Entity", "ORG"),
                   pp=("in", "Place", "GPE")),
    "Phone-Write": _Frame((("phoned",), ("wrote",)), ("Entity", "PER"), obj=("Entity", "ORG")),
    "Start-Position": _Frame((("hired",), ("appointed",)), ("Entity", "ORG"),
                             obj=("Person", "PER")),
    "End-Position": _Frame((("resigned",), ("retired",), ("quit",)), ("Person", "PER"),
                           pp=("from", "Entity", "ORG")),
    "Nominate": _Frame((("nominated",),), ("Agent", "PER"), obj=("Person", "PER")),
    "Elect": _Frame((("elected",),), ("Entity", "PER"), obj=("Person", "PER")),
    "Arrest-Jail": _Frame((("arrested",), ("detained",), ("jailed",)), ("Agent", "PER"),
                          obj=("Person", "PER"), pp=("in", "Place", "GPE")),
    "Release-Parole": _Frame((("freed",), ("paroled",)), ("Entity", "ORG"),
                             obj=("Person", "PER")),
    "Trial-Hearing": _Frame((("tried",), ("stood", "trial")), ("Defendant", "PER"),
                            pp=("before", "Adjudicator", "ORG")),
    "Charge-Indict": _Frame((("indicted",), ("accused",)), ("Prosecutor", "ORG"),
                            obj=("Defendant", "PER")),
    "Sue": _Frame((("sued",),), ("Plaintiff", "PER"), obj=("Defendant", "ORG")),
    "Convict": _Frame((("convicted",),), ("Adjudicator", "ORG"), obj=("Defendant", "PER")),
    "Sentence": _Frame((("sentenced",),), ("Adjudicator", "ORG"), obj=("Defendant", "PER")),
    "Fine": _Frame((("fined",),), ("Adjudicator", "ORG"), obj=("Entity", "ORG")),
    "Execute": _Frame((("executed",),), ("Agent", "ORG"), obj=("Person", "PER"),
                      pp=("in", "Place", "GPE")),
    "Extradite": _Frame((("extradited",),), ("Agent", "ORG"), obj=("Person", "PER"),
                        pp=("to", "Destination", "GPE")),
    "Acquit": _Frame((("acquitted",),), ("Adjudicator", "ORG"), obj=("Defendant", "PER")),
    "Appeal": _Frame((("appealed",),), ("Defendant", "PER"), pp=("to", "Adjudicator", "ORG")),
    "Pardon": _Frame((("pardoned",),), ("Adjudicator", "PER"), obj=("Defendant", "PER")),
}

# Ambiguous lemmas: reading chosen by the anchor event's subtype. Clause shape
# is identical for both readings (subject entity + bare verb), so nothing
# local reveals the answer. Partner sets of the two readings are disjoint.
AMBIGUOUS_LEMMAS = {
    "left": (
        ("Transport", "Artifact", frozenset({"Attack", "Die", "Injure", "Demonstrate"})),
        ("End-Position", "Person", frozenset({"Start-Position", "Elect", "Nominate"})),
    ),
    "fired": (
        ("Attack", "Attacker", frozenset({"Die", "Injure", "Transport", "Meet"})),
        ("End-Position", "Person", frozenset({"Start-Position", "Elect"})),
    ),
    "released": (
        ("Release-Parole", "Person", frozenset({"Arrest-Jail", "Sentence", "Pardon", "Convict"})),
        ("Transfer-Ownership", "Seller", frozenset({"Transfer-Money", "Merge-Org"})),
    ),
}

_SUBTYPE_INDEX = {s: i for i, s in enumerate(EVENT_SUBTYPES)}


def default_cooccurrence_table() -> np.ndarray:
    """Row-stochastic 33x33 sampling table: row = anchor, column = companion.

    Rows are concentrated on a handful of plausible companions, mirroring the
    kind of skew real event data shows (attacks go with deaths and injuries,
    judicial steps chain together, and so on).
    """
    rows = {
        "Attack": [("Die", 0.4), ("Injure", 0.3), ("Transport", 0.3)],
        "Die": [("Attack", 0.4), ("Injure", 0.2), ("Transport", 0.2), ("Start-Position", 0.2)],
        "Injure": [("Attack", 0.45), ("Die", 0.3), ("Transport", 0.25)],
        "Transport": [("Attack", 0.4), ("Die", 0.3), ("Meet", 0.3)],
        "Meet": [("Attack", 0.4), ("Transport", 0.3), ("Transfer-Money", 0.3)],
        "Demonstrate": [("Attack", 0.4), ("Transport", 0.3), ("Arrest-Jail", 0.3)],
        "Transfer-Money": [("Transfer-Ownership", 0.5), ("Meet", 0.5)],
        "Transfer-Ownership": [("Transfer-Money", 0.6), ("Merge-Org", 0.4)],
        "Start-Org": [("Merge-Org", 0.5), ("Transfer-Money", 0.5)],
        "Merge-Org": [("Transfer-Ownership", 0.5), ("End-Org", 0.5)],
        "Declare-Bankruptcy": [("End-Org", 0.6), ("Transfer-Money", 0.4)],
        "End-Org": [("Declare-Bankruptcy", 0.5), ("Merge-Org", 0.5)],
        "Be-Born": [("Marry", 0.6), ("Die", 0.4)],
        "Marry": [("Be-Born", 0.5), ("Divorce", 0.5)],
        "Divorce": [("Marry", 0.6), ("Sue", 0.4)],
        "Phone-Write": [("Meet", 0.6), ("Transfer-Money", 0.4)],
        "Start-Position": [("End-Position", 0.4), ("Elect", 0.3), ("Attack", 0.3)],
        "End-Position": [("Start-Position", 0.6), ("Elect", 0.4)],
        "Elect": [("Start-Position", 0.4), ("End-Position", 0.3), ("Meet", 0.3)],
        "Nominate": [("Elect", 0.5), ("Start-Position", 0.3), ("Die", 0.2)],
        "Arrest-Jail": [("Charge-Indict", 0.4), ("Trial-Hearing", 0.3), ("Attack", 0.3)],
        "Release-Parole": [("Arrest-Jail", 0.5), ("Pardon", 0.5)],
        "Trial-Hearing": [("Convict", 0.4), ("Charge-Indict", 0.3), ("Sentence", 0.3)],
        "Charge-Indict": [("Arrest-Jail", 0.4), ("Trial-Hearing", 0.3), ("Convict", 0.3)],
        "Sue": [("Trial-Hearing", 0.5), ("Fine", 0.5)],
        "Convict": [("Sentence", 0.6), ("Trial-Hearing", 0.4)],
        "Sentence": [("Convict", 0.4), ("Release-Parole", 0.3), ("Arrest-Jail", 0.3)],
        "Fine": [("Convict", 0.5), ("Sue", 0.5)],
        "Execute": [("Convict", 0.5), ("Sentence", 0.5)],
        "Extradite": [("Arrest-Jail", 0.5), ("Trial-Hearing", 0.5)],
        "Acquit": [("Trial-Hearing", 0.6), ("Release-Parole", 0.4)],
        "Appeal": [("Convict", 0.5), ("Sentence", 0.5)],
        "Pardon": [("Release-Parole", 0.5), ("Convict", 0.5)],
    }
    table = np.zeros((len(EVENT_SUBTYPES), len(EVENT_SUBTYPES)))
    for anchor, pairs in rows.items():
        for companion, p in pairs:
            table[_SUBTYPE_INDEX[anchor], _SUBTYPE_INDEX[companion]] = p
    sums = table.sum(axis=1)
    if not np.allclose(sums, 1.0):
        raise ValueError(f"co-occurrence rows must sum to 1, got {sums}")
    return table


def paired_cooccurrence_table() -> np.ndarray:
    """Deterministic companion table: subtypes pair up (last pairs with
    itself), so realized conditional probabilities are exactly 0 or 1 at
    multi rate 1.0 and sharply concentrated below it."""
    k = len(EVENT_SUBTYPES)
    table = np.zeros((k, k))
    for i in range(0, k - 1, 2):
        table[i, i + 1] = 1.0
        table[i + 1, i] = 1.0
    table[k - 1, k - 1] = 1.0
    return table


def cooccurrence_truth(table: np.ndarray,
                       multi_event_rate: float = DEFAULT_MULTI_EVENT_RATE,
                       three_event_share: float = DEFAULT_THREE_EVENT_SHARE) -> np.ndarray:
    """Exact P(subtype B occurs in a sentence | subtype A occurs) under the
    generative process, by enumerating every (anchor, companions) outcome."""
    k = table.shape[0]
    pi = np.full(k, 1.0 / k)
    present = np.zeros(k)
    joint = np.zeros((k, k))

    def account(weight, members):
        members = sorted(set(members))
        for x in members:
            present[x] += weight
            for y in members:
                joint[x, y] += weight

    p_single = 1.0 - multi_event_rate
    p_two = multi_event_rate * (1.0 - three_event_share)
    p_three = multi_event_rate * three_event_share
    for a in range(k):
        if p_single > 0:
            account(p_single * pi[a], (a,))
        for b in range(k):
            pab = pi[a] * table[a, b]
            if pab == 0.0:
                continue
            if p_two > 0:
                account(p_two * pab, (a, b))
            if p_three > 0:
                for c in range(k):
                    pabc = pab * table[a, c]
                    if pabc > 0:
                        account(p_three * pabc, (a, b, c))
    truth = np.zeros((k, k))
    nonzero = present > 0
    truth[nonzero] = joint[nonzero] / present[nonzero, None]
    return truth


# ---------------------------------------------------------------------------
# clause assembly
# ---------------------------------------------------------------------------

class _Builder:
    """Accumulates tokens/entities/events for one sentence; heads are global
    token indices, ROOT is -1 until the first clause claims it."""

    def __init__(self):
        self.tokens = []
        self.entities = []
        self.events = []

    def add(self, form, pos, head, deprel):
        self.tokens.append([form, pos, head, deprel])
        return len(self.tokens) - 1

    def entity_phrase(self, rng, etype, head_target, deprel, allow_nested):
        """Emit a noun phrase and register its mention(s).

        Returns (phrase head token index, mention index of the full phrase).
        """
        start = len(self.tokens)
        if etype == "ORG" and allow_nested and rng.random() < 0.15:
            det = self.add("the", "DET", -2, "det")
            city = self.add(str(rng.choice(_NESTED_ORG_CITIES)), "PROPN", -2, "compound")
            head = self.add(str(rng.choice(_NESTED_ORG_HEADS)), "NOUN", head_target, deprel)
            self.tokens[det][2] = head
            self.tokens[city][2] = head
            self.entities.append(EntityMention(start, head + 1, "ORG"))
            self.entities.append(EntityMention(city, city + 1, "GPE"))
            return head, len(self.entities) - 2
        noun = str(rng.choice(_NOUNS[etype]))
        if etype == "GPE":
            head = self.add(noun, "PROPN", head_target, deprel)
        elif etype == "PER" and rng.random() < 0.3:
            num = self.add(str(rng.choice(_NUMS)), "NUM", -2, "nummod")
            head = self.add(noun, "NOUN", head_target, deprel)
            self.tokens[num][2] = head
        else:
            det = self.add("the", "DET", -2, "det")
            head = self.add(noun, "NOUN", head_target, deprel)
            self.tokens[det][2] = head
        self.entities.append(EntityMention(start, head + 1, etype))
        return head, len(self.entities) - 1


def _emit_clause(b: _Builder, rng, subtype, frame: _Frame, conj_head: int,
                 entity_cap: int, rich: bool):
    """One event clause; returns the trigger head index."""
    args = []
    subj_role, subj_type = frame.subject
    subj, subj_ment = b.entity_phrase(rng, subj_type, -2, "nsubj",
                                      allow_nested=len(b.entities) + 2 <= entity_cap)
    args.append((subj_ment, subj_role))
    adv = None
    if rich and rng.random() < 0.45:
        adv = b.add(str(rng.choice(_ADVERBS)), "ADV", -2, "advmod")
    trig_tokens = frame.triggers[int(rng.integers(len(frame.triggers)))]
    deprel = "root" if conj_head == -1 else "conj"
    t0 = b.add(trig_tokens[0], "VERB", conj_head, deprel)
    for extra in trig_tokens[1:]:
        b.add(extra, "VERB", t0, "compound")
    b.tokens[subj][2] = t0
    if adv is not None:
        b.tokens[adv][2] = t0
    if frame.obj is not None and len(b.entities) < entity_cap and (rich or rng.random() < 0.5):
        role, etype = frame.obj
        obj, ment = b.entity_phrase(rng, etype, t0, "obj", allow_nested=False)
        args.append((ment, role))
    if frame.pp is not None and len(b.entities) < entity_cap and (rich or rng.random() < 0.4):
        adp, role, etype = frame.pp
        case = b.add(adp, "ADP", -2, "case")
        pp, ment = b.entity_phrase(rng, etype, t0, "obl", allow_nested=False)
        b.tokens[case][2] = pp
        args.append((ment, role))
    if rich and rng.random() < 0.45:
        case = b.add("on", "ADP", -2, "case")
        day = b.add(str(rng.choice(_DAYS)), "NOUN", t0, "obl")
        b.tokens[case][2] = day
    trig_end = t0 + len(trig_tokens)
    b.events.append(EventMention(t0, trig_end, subtype, tuple(args)))
    return t0


def _emit_bare_clause(b: _Builder, rng, subtype, role, lemma, conj_head):
    """Minimal subject + verb clause used for ambiguous triggers."""
    subj, ment = b.entity_phrase(rng, "PER", -2, "nsubj", allow_nested=False)
    adv = None
    if rng.random() < 0.4:
        adv = b.add(str(rng.choice(_ADVERBS)), "ADV", -2, "advmod")
    t0 = b.add(lemma, "VERB", conj_head, "conj" if conj_head != -1 else "root")
    b.tokens[subj][2] = t0
    if adv is not None:
        b.tokens[adv][2] = t0
    b.events.append(EventMention(t0, t0 + 1, subtype, ((ment, role),)))
    return t0


def _usable_ambiguous(subtype: str, anchor: str):
    out = []
    for lemma, readings in AMBIGUOUS_LEMMAS.items():
        match = [r for r in readings if r[0] == subtype and anchor in r[2]]
        clash = [r for r in readings if r[0] != subtype and anchor in r[2]]
        if match and not clash:
            out.append((lemma, match[0][1]))
    return out


def generate_synthetic_corpus(seed: int, n_sentences: int,
                              multi_event_rate: float = DEFAULT_MULTI_EVENT_RATE,
                              table: np.ndarray | None = None,
                              three_event_share: float = DEFAULT_THREE_EVENT_SHARE,
                              ambiguous_share: float = DEFAULT_AMBIGUOUS_SHARE) -> list:
    """Deterministic corpus of ``n_sentences`` for a fixed seed."""
    if not 0.0 <= multi_event_rate <= 1.0:
        raise ValueError(f"multi_event_rate must be in [0, 1], got {multi_event_rate}")
    if table is None:
        table = default_cooccurrence_table()
    rng = np.random.default_rng(seed)
    k = len(EVENT_SUBTYPES)
    sentences = []
    for _ in range(n_sentences):
        b = _Builder()
        anchor_id = int(rng.integers(k))
        anchor = EVENT_SUBTYPES[anchor_id]
        multi = rng.random() < multi_event_rate
        n_extra = 0
        if multi:
            n_extra = 2 if rng.random() < three_event_share else 1
        companions = [
            EVENT_SUBTYPES[int(rng.choice(k, p=table[anchor_id]))] for _ in range(n_extra)
        ]
        # Each companion clause contributes exactly one mention, so the anchor
        # clause gets whatever is left of the 4-mention cap.
        head0 = _emit_clause(b, rng, anchor, FRAMES[anchor], -1,
                             entity_cap=4 - n_extra, rich=multi)
        for j, companion in enumerate(companions):
            joiner = "and" if j == n_extra - 1 else ","
            join_idx = b.add(joiner, "CCONJ" if joiner == "and" else "PUNCT", -2,
                             "cc" if joiner == "and" else "punct")
            options = _usable_ambiguous(companion, anchor)
            if options and rng.random() < ambiguous_share:
                lemma, role = options[int(rng.integers(len(options)))]
                t = _emit_bare_clause(b, rng, companion, role, lemma, head0)
            else:
                t = _emit_clause(b, rng, companion, FRAMES[companion], head0,
                                 entity_cap=len(b.entities) + 1, rich=False)
            b.tokens[join_idx][2] = t
        sentences.append(Sentence(
            tuple(Token(*tok) for tok in b.tokens),
            tuple(b.entities),
            tuple(b.events),
        ))
    return sentences


def vocabulary_words():
    """Every surface form the generator can emit (for building catalogs)."""
    words = set()
    for pool in _NOUNS.values():
        words.update(pool)
    words.update(_NESTED_ORG_CITIES)
    words.update(_NESTED_ORG_HEADS)
    words.update(_NUMS)
    words.update(_ADVERBS)
    words.update(_DAYS)
    words.update(("the", "and", ",", "in", "to", "with", "from", "before", "on"))
    for frame in FRAMES.values():
        for trig in frame.triggers:
            words.update(trig)
    words.update(AMBIGUOUS_LEMMAS.keys())
    return sorted(words)
