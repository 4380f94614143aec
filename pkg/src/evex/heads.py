"""Self-attention trigger classifier and span-pooled argument classifier.

One attention score vector is computed per sentence (masked softmax over the
pre-attention logits); position i's context is the score-weighted sum of all
other positions' representations concatenated with its own representation.
Trigger tags are predicted per token from that context; argument roles are
predicted per (trigger candidate, entity) pair from mean-pooled rows of the
transformed context matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ModelConfig
from .corpus import LabelCatalog, decode_trigger_spans
from .encoder import PreparedSentence, _glorot, _zeros


class HeadParams:
    def __init__(self, rng, rep_dim: int, config: ModelConfig, n_tags: int, n_roles: int):
        att = config.attention_hidden
        trans = config.transform_hidden
        self.w1 = _glorot(rng, rep_dim, att)
        self.b1 = _zeros(1, att)
        self.w2 = _glorot(rng, att, 1)
        self.b2 = _zeros(1, 1)
        self.w_c = _glorot(rng, 2 * rep_dim, trans)
        self.b_c = _zeros(1, trans)
        self.w_t = _glorot(rng, trans, n_tags)
        self.b_t = _zeros(1, n_tags)
        self.w_a = _glorot(rng, 2 * trans, n_roles)
        self.b_a = _zeros(1, n_roles)

    def named(self):
        yield "att.w1", self.w1
        yield "att.b1", self.b1
        yield "att.w2", self.w2
        yield "att.b2", self.b2
        yield "trig.w_c", self.w_c
        yield "trig.b_c", self.b_c
        yield "trig.w_t", self.w_t
        yield "trig.b_t", self.b_t
        yield "arg.w_a", self.w_a
        yield "arg.b_a", self.b_a


def self_attention_context(d: Tensor, mask: np.ndarray, params: HeadParams):
    """Returns (score, context): score is the shared n x 1 attention vector
    (zeros on pads, summing to 1 over real positions); context row i is
    [sum_{j != i} score_j * D_j | D_i]."""
    if not mask.any():
        raise ad.ShapeError("self_attention_context: sentence is all padding")
    n = d.data.shape[0]
    hidden = ad.relu(ad.add(ad.matmul(d, params.w1), params.b1))
    logits = ad.add(ad.matmul(hidden, params.w2), params.b2)       # n x 1
    score = ad.softmax(logits, axis=0, mask=mask[:, None])
    weighted_total = ad.matmul(ad.reshape(score, (1, n)), d)       # 1 x dim
    spread = ad.matmul(ad.constant(np.ones((n, 1))), weighted_total)
    excl = ad.sub(spread, ad.mul(score, d))                        # drop own term
    return score, ad.concat([excl, d], axis=1)


def trigger_transform(context: Tensor, params: HeadParams) -> Tensor:
    return ad.relu(ad.add(ad.matmul(context, params.w_c), params.b_c))


def trigger_logits(cbar: Tensor, params: HeadParams) -> Tensor:
    return ad.add(ad.matmul(cbar, params.w_t), params.b_t)


def trigger_classify(context: Tensor, params: HeadParams):
    """Per-token trigger distributions plus the transformed context kept for
    the argument head."""
    cbar = trigger_transform(context, params)
    return ad.softmax(trigger_logits(cbar, params), axis=1), cbar


def extract_candidates(trigger_probs: np.ndarray, n_real: int, catalog: LabelCatalog):
    """Hard argmax decode of the per-token distributions into trigger spans.

    Ties go to the lowest tag id, so an exactly uniform row yields O.
    """
    tag_ids = np.argmax(trigger_probs[:n_real], axis=1)
    return decode_trigger_spans(tag_ids.tolist(), catalog)


def span_mean(matrix: Tensor, start: int, end: int) -> Tensor:
    """Mean of rows [start, end) as a 1 x dim tensor."""
    n = matrix.data.shape[0]
    if not 0 <= start < end <= n:
        raise ad.ShapeError(f"span_mean: empty or out-of-range span [{start}, {end})")
    pool = np.zeros((1, n))
    pool[0, start:end] = 1.0 / (end - start)
    return ad.matmul(ad.constant(pool), matrix)


def argument_logits(cbar: Tensor, trigger_span, entity_span, params: HeadParams) -> Tensor:
    t_vec = span_mean(cbar, trigger_span[0], trigger_span[1])
    e_vec = span_mean(cbar, entity_span[0], entity_span[1])
    return ad.add(ad.matmul(ad.concat([t_vec, e_vec], axis=1), params.w_a), params.b_a)


def argument_classify(cbar: Tensor, trigger_span, entity_span, params: HeadParams) -> Tensor:
    return ad.softmax(argument_logits(cbar, trigger_span, entity_span, params), axis=1)


@dataclass
class SentencePrediction:
    """Everything the model says about one sentence.

    ``events`` mirror the corpus schema with entity indices into the original
    sentence entity list; role distributions are keyed by (candidate index,
    prepared entity index).
    """

    tokens: list
    trigger_tag_ids: list
    trigger_distributions: np.ndarray      # n_real x n_tags
    candidates: list                       # (start, end, subtype)
    role_distributions: dict               # (cand idx, ent idx) -> np (n_roles,)
    events: list                           # (start, end, subtype, [(orig ent idx, role)])
    attention: np.ndarray                  # n_real scores
    context: np.ndarray                    # n_real x transform_hidden


def predict_sentence(model, sentence) -> SentencePrediction:
    """Full inference for one sentence: encode, classify triggers, decode
    candidates, classify a role for every (candidate, entity) pair. Arguments
    whose argmax role is OTHER are omitted from the event structures."""
    prep = model.prepare(sentence)
    with ad.no_grad():
        out = model.forward(prep, train=False)
        probs = out.trigger_probs.data
        candidates = extract_candidates(probs, prep.n_real, model.catalog)
        role_dists = {}
        events = []
        for ci, (start, end, subtype) in enumerate(candidates):
            args = []
            for ei, ent in enumerate(prep.entities):
                y = ad.softmax(
                    argument_logits(out.cbar, (start, end), (ent.start, ent.end), model.head_params),
                    axis=1,
                ).data[0]
                role_dists[(ci, ei)] = y
                role_id = int(np.argmax(y))
                if role_id != model.catalog.other_role:
                    args.append((prep.entity_map[ei], model.catalog.roles[role_id]))
            events.append((start, end, subtype, args))
    n = prep.n_real
    return SentencePrediction(
        tokens=[t.form for t in sentence.tokens[:n]],
        trigger_tag_ids=np.argmax(probs[:n], axis=1).tolist(),
        trigger_distributions=probs[:n],
        candidates=candidates,
        role_distributions=role_dists,
        events=events,
        attention=out.score.data[:n, 0].copy(),
        context=out.cbar.data[:n].copy(),
    )
