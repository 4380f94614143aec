import numpy as np
import pytest

from evex.corpus import (
    EntityMention,
    EventMention,
    LabelCatalog,
    Sentence,
    Token,
)
from evex.synth import vocabulary_words


@pytest.fixture(scope="session")
def catalog():
    return LabelCatalog(vocabulary_words())


def t(form, pos, head, deprel="dep"):
    return Token(form, pos, head, deprel)


@pytest.fixture(scope="session")
def multi_event_fixture():
    """Hand-built two-event sentence: a Die trigger ("killed") with four
    arguments and an Attack trigger ("barrage") with three, connected by the
    arc chain killed -nmod-> witnesses -acl-> called -xcomp-> barrage.

    tokens:  0 dozens 1 were 2 killed 3 in 4 baghdad 5 before 6 witnesses
             7 called 8 the 9 barrage 10 of 11 mortars 12 an 13 attack
    """
    tokens = (
        t("dozens", "NOUN", 2, "nsubj"),
        t("were", "VERB", 2, "aux"),
        t("killed", "VERB", -1, "root"),
        t("in", "ADP", 4, "case"),
        t("baghdad", "PROPN", 2, "obl"),
        t("before", "ADP", 6, "case"),
        t("witnesses", "NOUN", 2, "nmod"),
        t("called", "VERB", 6, "acl"),
        t("the", "DET", 9, "det"),
        t("barrage", "NOUN", 7, "xcomp"),
        t("of", "ADP", 11, "case"),
        t("mortars", "NOUN", 9, "nmod"),
        t("an", "DET", 13, "det"),
        t("attack", "NOUN", 7, "obj"),
    )
    entities = (
        EntityMention(0, 1, "PER"),     # dozens
        EntityMention(4, 5, "GPE"),     # baghdad
        EntityMention(6, 7, "PER"),     # witnesses
        EntityMention(10, 12, "WEA"),   # of mortars -> mortars
        EntityMention(12, 14, "FAC"),   # an attack (stand-in target extent)
    )
    events = (
        EventMention(2, 3, "Die", ((0, "Victim"), (1, "Place"), (2, "Entity"), (3, "Instrument"))),
        EventMention(9, 10, "Attack", ((0, "Target"), (1, "Place"), (3, "Instrument"))),
    )
    return Sentence(tokens, entities, events)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
