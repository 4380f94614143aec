"""Biased joint loss, AdaDelta, and the training loop.

The loss over a batch is

    J = -sum_p [ sum_i I(t_i) log p(gold tag_i)
                 + beta * sum_{c in candidates} sum_j log p(gold role_cj) ]
        + l2 * ||theta||^2

where I(t_i) is alpha for non-O gold tags and 1 otherwise, summed over real
(non-pad) tokens. Argument terms range over the trigger candidates extracted
from the current model output (optionally topped up with missed gold
triggers) crossed with every entity; a candidate that does not exactly match
a gold trigger (span and subtype) makes every entity's gold role OTHER.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import LossConfig, TrainConfig
from .corpus import LabelCatalog
from .encoder import PreparedSentence
from .evaluation import score
from .heads import argument_logits, extract_candidates, predict_sentence
from .model import ForwardPass, JointModel


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""


@dataclass
class SentenceLossInput:
    prep: PreparedSentence
    out: ForwardPass
    candidates: list            # (start, end, subtype)
    gold_roles: np.ndarray      # n_candidates x n_entities role ids


def assign_argument_gold(candidates, gold_events, n_entities: int,
                         catalog: LabelCatalog) -> np.ndarray:
    """Gold role matrix for the argument head.

    A candidate matching a gold trigger exactly (span AND subtype) receives
    that event's argument roles, OTHER for unlisted entities; any other
    candidate (wrong span, or right span with the wrong subtype) receives
    OTHER everywhere.
    """
    by_trigger = {(ev.trigger_start, ev.trigger_end, ev.subtype): ev for ev in gold_events}
    gold = np.full((len(candidates), n_entities), catalog.other_role, dtype=np.int64)
    for ci, key in enumerate(candidates):
        ev = by_trigger.get(tuple(key))
        if ev is None:
            continue
        for ent_idx, role in ev.arguments:
            gold[ci, ent_idx] = catalog.role_index[role]
    return gold


def trigger_weight_matrix(prep: PreparedSentence, alpha: float, n_tags: int) -> np.ndarray:
    w = np.zeros((len(prep.gold_tags), n_tags))
    for i in range(prep.n_real):
        tag = prep.gold_tags[i]
        w[i, tag] = alpha if tag != 0 else 1.0
    return w


def joint_loss(items, loss_cfg: LossConfig, head_params, l2: float = 0.0,
               params=None) -> Tensor:
    """Scalar loss tensor over a batch of forwarded sentences."""
    n_tags = items[0].out.logits.data.shape[1] if items else 0
    total = None

    def accumulate(term):
        nonlocal total
        total = term if total is None else ad.add(total, term)

    for item in items:
        lp = ad.log_softmax(item.out.logits, axis=1)
        weights = ad.constant(trigger_weight_matrix(item.prep, loss_cfg.alpha, n_tags))
        accumulate(-ad.reduce_sum(ad.mul(weights, lp)))
        if len(item.candidates) == 0 or len(item.prep.entities) == 0:
            continue
        for ci, (start, end, _subtype) in enumerate(item.candidates):
            for ei, ent in enumerate(item.prep.entities):
                logits = argument_logits(item.out.cbar, (start, end), (ent.start, ent.end),
                                         head_params)
                lpa = ad.log_softmax(logits, axis=1)
                pick = np.zeros((1, lpa.data.shape[1]))
                pick[0, item.gold_roles[ci, ei]] = loss_cfg.beta
                accumulate(-ad.reduce_sum(ad.mul(ad.constant(pick), lpa)))
    if total is None:
        total = ad.constant(np.zeros(()))
    if l2 > 0.0 and params:
        reg = None
        for p in params:
            sq = ad.reduce_sum(ad.mul(p, p))
            reg = sq if reg is None else ad.add(reg, sq)
        total = ad.add(total, l2 * reg)
    return total


def plain_nll_reference(trigger_probs, gold_tags, mask, role_probs=None, gold_roles=None,
                        alpha: float = 1.0, beta: float = 1.0) -> float:
    """Independent scalar re-implementation of the loss (no tape, pure
    Python floats) used to cross-check the tensor version."""
    import math

    total = 0.0
    for i, real in enumerate(mask):
        if not real:
            continue
        weight = alpha if gold_tags[i] != 0 else 1.0
        total -= weight * math.log(trigger_probs[i][gold_tags[i]])
    if role_probs is not None:
        for ci in range(len(role_probs)):
            for ei in range(len(role_probs[ci])):
                total -= beta * math.log(role_probs[ci][ei][gold_roles[ci][ei]])
    return total


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class AdaDelta:
    """Accumulator-ratio update rule:

        E[g^2]  <- rho E[g^2] + (1 - rho) g^2
        dx       = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
        E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
        x       <- x + dx
    """

    def __init__(self, named_params, rho: float = 0.95, eps: float = 1e-6):
        self.named_params = list(named_params)
        self.rho = rho
        self.eps = eps
        self.sq_grad = {name: np.zeros_like(t.data) for name, t in self.named_params}
        self.sq_delta = {name: np.zeros_like(t.data) for name, t in self.named_params}

    def step(self) -> None:
        for name, t in self.named_params:
            g = t.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise DivergenceError(f"non-finite gradient for parameter {name!r}")
            acc_g = self.sq_grad[name]
            acc_d = self.sq_delta[name]
            acc_g *= self.rho
            acc_g += (1.0 - self.rho) * g * g
            delta = -np.sqrt(acc_d + self.eps) / np.sqrt(acc_g + self.eps) * g
            acc_d *= self.rho
            acc_d += (1.0 - self.rho) * delta * delta
            t.data += delta

    def zero_grad(self) -> None:
        for _, t in self.named_params:
            t.grad = None


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    metric_log: list            # one dict per epoch
    best_state: dict            # parameter name -> ndarray
    best_epoch: int             # -1 when no dev evaluation ran
    best_f1: float


def _dev_metrics(model: JointModel, dev_sentences) -> dict:
    predictions = [predict_sentence(model, s) for s in dev_sentences]
    report = score(dev_sentences, predictions)
    return {stage: getattr(report, stage).as_dict() for stage in report.STAGES}


def train(model: JointModel, train_sentences, dev_sentences,
          train_cfg: TrainConfig, loss_cfg: LossConfig, on_epoch=None) -> TrainResult:
    """Mini-batch training with per-epoch dev evaluation.

    Keeps the parameter snapshot with the best dev trigger-classification F1
    and stops early when it has not improved for ``patience`` epochs
    (patience 0 disables early stopping). Deterministic for a fixed seed.
    """
    preps = [model.prepare(s) for s in train_sentences]
    params = model.parameters()
    opt = AdaDelta(model.named_parameters(), rho=train_cfg.rho, eps=train_cfg.eps)
    rng = np.random.default_rng(train_cfg.seed)
    metric_log = []
    best_state = model.state_dict()
    best_f1 = -1.0
    best_epoch = -1
    stale = 0
    for epoch in range(train_cfg.epochs):
        order = rng.permutation(len(preps))
        epoch_loss = 0.0
        for batch_no, start in enumerate(range(0, len(preps), train_cfg.batch_size)):
            batch = order[start:start + train_cfg.batch_size]
            try:
                items = []
                for i in batch:
                    prep = preps[i]
                    out = model.forward(prep, train=True, rng=rng)
                    candidates = extract_candidates(
                        out.trigger_probs.data, prep.n_real, model.catalog
                    )
                    if train_cfg.inject_gold_candidates:
                        have = set(map(tuple, candidates))
                        for ev in prep.events:
                            key = (ev.trigger_start, ev.trigger_end, ev.subtype)
                            if key not in have:
                                candidates.append(key)
                    gold_roles = assign_argument_gold(
                        candidates, prep.events, len(prep.entities), model.catalog
                    )
                    items.append(SentenceLossInput(prep, out, candidates, gold_roles))
                loss = joint_loss(items, loss_cfg, model.head_params,
                                  l2=train_cfg.l2, params=params)
                ad.backward(loss)
                opt.step()
                opt.zero_grad()
            except (ad.NumericError, DivergenceError) as exc:
                raise DivergenceError(f"epoch {epoch} batch {batch_no}: {exc}") from exc
            epoch_loss += float(loss.data)
        dev = _dev_metrics(model, dev_sentences)
        record = {"epoch": epoch, "train_loss": epoch_loss, "dev": dev}
        metric_log.append(record)
        if on_epoch is not None:
            on_epoch(record)
        f1 = dev["trigger_cls"]["f1"]
        if f1 > best_f1:
            best_f1 = f1
            best_state = model.state_dict()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if train_cfg.patience and stale >= train_cfg.patience:
                break
    return TrainResult(metric_log=metric_log, best_state=best_state,
                       best_epoch=best_epoch, best_f1=best_f1)
