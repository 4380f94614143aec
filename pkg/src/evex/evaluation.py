"""Scoring of predicted events against gold annotations.

The four standard criteria, applied with exact span offsets and greedy
one-to-one matching in prediction order:

- trigger identified: predicted trigger span matches a gold trigger span;
- trigger classified: span and event subtype both match;
- argument identified: predicted (event subtype, entity span) matches a gold
  argument of a gold event of that subtype;
- argument role: additionally the role matches.

Duplicate predictions of an already-matched gold item count as false
positives. Precision is tp/predicted (0 when nothing was predicted), recall
tp/gold (0 when there is no gold), F1 their harmonic mean.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .corpus import (
    EVENT_SUBTYPES,
    Sentence,
    split_single_multi,
    split_single_multi_arguments,
)


@dataclass
class PRF:
    true_positives: int
    predicted_count: int
    gold_count: int

    @property
    def precision(self) -> float:
        return self.true_positives / self.predicted_count if self.predicted_count else 0.0

    @property
    def recall(self) -> float:
        return self.true_positives / self.gold_count if self.gold_count else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    def as_dict(self) -> dict:
        return {
            "tp": self.true_positives,
            "predicted": self.predicted_count,
            "gold": self.gold_count,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


@dataclass
class EvalReport:
    trigger_id: PRF
    trigger_cls: PRF
    argument_id: PRF
    argument_role: PRF
    splits: dict = field(default_factory=dict)   # "1/1" / "1/N" -> EvalReport

    STAGES = ("trigger_id", "trigger_cls", "argument_id", "argument_role")

    def as_dict(self) -> dict:
        out = {stage: getattr(self, stage).as_dict() for stage in self.STAGES}
        if self.splits:
            out["splits"] = {k: v.as_dict() for k, v in self.splits.items()}
        return out


def predicted_events(prediction):
    """Accept either a SentencePrediction or a plain list of event tuples."""
    return prediction.events if hasattr(prediction, "events") else prediction


def _greedy_tp(predicted_keys, gold_keys) -> int:
    remaining = Counter(gold_keys)
    tp = 0
    for key in predicted_keys:
        if remaining[key] > 0:
            remaining[key] -= 1
            tp += 1
    return tp


def _argument_items(sentence: Sentence, events) -> list:
    items = []
    for start, end, subtype, args in events:
        for ent_idx, role in args:
            ent = sentence.entities[ent_idx]
            items.append((subtype, ent.start, ent.end, role))
    return items


def score(gold_sentences, predictions, indices=None) -> EvalReport:
    """Corpus-level report; ``indices`` restricts scoring to a sentence subset."""
    if len(gold_sentences) != len(predictions):
        raise ValueError(
            f"misaligned corpora: {len(gold_sentences)} gold vs {len(predictions)} predicted"
        )
    if indices is None:
        indices = range(len(gold_sentences))
    counts = {stage: [0, 0, 0] for stage in EvalReport.STAGES}
    for i in indices:
        sentence = gold_sentences[i]
        events = predicted_events(predictions[i])
        gold_trig = [(ev.trigger_start, ev.trigger_end) for ev in sentence.events]
        gold_trig_cls = [(ev.trigger_start, ev.trigger_end, ev.subtype) for ev in sentence.events]
        pred_trig = [(s, e) for s, e, _, _ in events]
        pred_trig_cls = [(s, e, sub) for s, e, sub, _ in events]
        gold_args = _argument_items(
            sentence,
            [(ev.trigger_start, ev.trigger_end, ev.subtype, ev.arguments) for ev in sentence.events],
        )
        pred_args = _argument_items(sentence, events)
        stage_data = {
            "trigger_id": (pred_trig, gold_trig),
            "trigger_cls": (pred_trig_cls, gold_trig_cls),
            "argument_id": ([a[:3] for a in pred_args], [a[:3] for a in gold_args]),
            "argument_role": (pred_args, gold_args),
        }
        for stage, (pred, gold) in stage_data.items():
            counts[stage][0] += _greedy_tp(pred, gold)
            counts[stage][1] += len(pred)
            counts[stage][2] += len(gold)
    return EvalReport(**{stage: PRF(*counts[stage]) for stage in EvalReport.STAGES})


def score_split(gold_sentences, predictions, argument_buckets_by_events: bool = False):
    """(1/1 report, 1/N report): trigger stages bucketed by gold trigger
    count, argument stages by gold argument count (or by event count when the
    flag is set). Sentences without the relevant annotation land in neither
    bucket."""
    trig_single, trig_multi = split_single_multi(gold_sentences)
    arg_single, arg_multi = split_single_multi_arguments(
        gold_sentences, by_events=argument_buckets_by_events
    )

    def restricted(trig_idx, arg_idx):
        trig = score(gold_sentences, predictions, indices=trig_idx)
        arg = score(gold_sentences, predictions, indices=arg_idx)
        return EvalReport(
            trigger_id=trig.trigger_id,
            trigger_cls=trig.trigger_cls,
            argument_id=arg.argument_id,
            argument_role=arg.argument_role,
        )

    return restricted(trig_single, arg_single), restricted(trig_multi, arg_multi)


def score_with_splits(gold_sentences, predictions,
                      argument_buckets_by_events: bool = False) -> EvalReport:
    report = score(gold_sentences, predictions)
    one, many = score_split(gold_sentences, predictions, argument_buckets_by_events)
    report.splits["1/1"] = one
    report.splits["1/N"] = many
    return report


# ---------------------------------------------------------------------------
# corpus statistics
# ---------------------------------------------------------------------------

def cooccurrence_stats(sentences, subtypes=EVENT_SUBTYPES):
    """Estimated P(an event of column type occurs | an event of row type
    occurs in the same sentence). Returns (matrix, support) where support[i]
    counts sentences containing the row type; zero-support rows are all-zero
    and flagged by support == 0."""
    index = {s: i for i, s in enumerate(subtypes)}
    k = len(subtypes)
    present = np.zeros(k)
    joint = np.zeros((k, k))
    for sentence in sentences:
        types = sorted({index[ev.subtype] for ev in sentence.events})
        for a in types:
            present[a] += 1
            for b in types:
                joint[a, b] += 1
    matrix = np.zeros((k, k))
    nz = present > 0
    matrix[nz] = joint[nz] / present[nz, None]
    return matrix, present.astype(int)


# ---------------------------------------------------------------------------
# attention export
# ---------------------------------------------------------------------------

def attention_matrix(prediction) -> np.ndarray:
    """Row i is the score vector used for context i, with position i zeroed."""
    scores = np.asarray(prediction.attention, dtype=float)
    n = scores.shape[0]
    matrix = np.tile(scores, (n, 1))
    np.fill_diagonal(matrix, 0.0)
    return matrix


def export_attention(prediction, path) -> None:
    matrix = attention_matrix(prediction)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(prediction.tokens)
        for row in matrix:
            writer.writerow([f"{v:.10g}" for v in row])
