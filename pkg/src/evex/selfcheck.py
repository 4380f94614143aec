"""Built-in verification battery behind the ``selfcheck`` CLI command.

Each check is independent and reports (name, passed, detail). ``break_op``
deliberately corrupts one op's backward rule for the duration of the run so
the battery's own failure reporting can be exercised (a failing check names
the op it covers).
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

from . import autodiff as ad
from .corpus import LabelCatalog, decode_trigger_spans, encode_trigger_bio
from .training import AdaDelta


@contextmanager
def _corrupt_backward(op_name):
    """Patch one autodiff op so its backward rule returns skewed gradients."""
    if op_name is None:
        yield
        return
    original = getattr(ad, op_name)

    def wrapped(*args, **kwargs):
        out = original(*args, **kwargs)
        rule = out.backward_rule
        if rule is not None:
            out.backward_rule = lambda g: tuple(
                None if p is None else p * 1.05 + 0.01 for p in rule(g)
            )
        return out

    setattr(ad, op_name, wrapped)
    try:
        yield
    finally:
        setattr(ad, op_name, original)


def _op_grad_checks():
    rng = np.random.default_rng(2024)

    def p(*shape):
        return ad.parameter(rng.uniform(-1.0, 1.0, size=shape))

    a34, b42, c23, d6 = p(3, 4), p(4, 2), p(2, 3), p(6)
    pos = ad.parameter(rng.uniform(0.2, 2.0, size=(2, 3)))
    table = p(5, 3)
    w32 = ad.constant(rng.normal(size=(3, 2)))
    w23 = ad.constant(rng.normal(size=(2, 3)))
    w6 = ad.constant(rng.normal(size=6))
    w25 = ad.constant(rng.normal(size=(2, 5)))
    w43 = ad.constant(rng.normal(size=(4, 3)))
    checks = {
        "matmul": (lambda: ad.reduce_sum(ad.mul(w32, ad.matmul(a34, b42))), [a34, b42]),
        "add": (lambda: ad.reduce_sum(ad.mul(w23, ad.add(c23, c23))), [c23]),
        "sub": (lambda: ad.reduce_sum(ad.mul(w23, ad.sub(c23, ad.mul(c23, c23)))), [c23]),
        "mul": (lambda: ad.reduce_sum(ad.mul(w23, ad.mul(c23, c23))), [c23]),
        "sigmoid": (lambda: ad.reduce_sum(ad.mul(w23, ad.sigmoid(c23))), [c23]),
        "tanh": (lambda: ad.reduce_sum(ad.mul(w23, ad.tanh(c23))), [c23]),
        "relu": (lambda: ad.reduce_sum(ad.mul(w6, ad.relu(d6))), [d6]),
        "exp": (lambda: ad.reduce_sum(ad.mul(w23, ad.exp(c23))), [c23]),
        "log": (lambda: ad.reduce_sum(ad.mul(w23, ad.log(pos))), [pos]),
        "softmax": (lambda: ad.reduce_sum(ad.mul(w23, ad.softmax(c23, axis=1))), [c23]),
        "log_softmax": (lambda: ad.reduce_sum(ad.mul(w23, ad.log_softmax(c23, axis=1))), [c23]),
        "concat": (lambda: ad.reduce_sum(ad.mul(w25, ad.concat([c23, ad.matmul(c23, w32)], axis=1))), [c23]),
        "reduce_sum": (lambda: ad.reduce_sum(ad.tanh(ad.reduce_sum(c23, axis=1))), [c23]),
        "reduce_mean": (lambda: ad.reduce_sum(ad.tanh(ad.reduce_mean(c23, axis=0))), [c23]),
        "reduce_max": (lambda: ad.reduce_sum(ad.tanh(ad.reduce_max(c23, axis=1))), [c23]),
        "gather_rows": (lambda: ad.reduce_sum(ad.mul(w43, ad.gather_rows(table, [0, 2, 2, 4]))), [table]),
        "scatter_sum": (lambda: ad.reduce_sum(ad.tanh(ad.scatter_sum(ad.gather_rows(table, [1, 3]), [0, 0], 2))), [table]),
        "slice_rows": (lambda: ad.reduce_sum(ad.tanh(ad.slice_rows(table, 1, 4))), [table]),
    }
    return checks


def _check_gcn_oracle(n_draws=20, tol=1e-9):
    from .corpus import EDGE_LABELS
    from .encoder import GcnLayerParams, gcn_layer

    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(n_draws):
        n = int(rng.integers(1, 9))
        din = int(rng.integers(2, 6))
        dout = int(rng.integers(2, 6))
        layer = GcnLayerParams(rng, din, dout)
        heads = [-1] + [int(rng.integers(0, i)) for i in range(1, n)]
        src = {label: [] for label in EDGE_LABELS}
        dst = {label: [] for label in EDGE_LABELS}
        for dep, head in enumerate(heads):
            if head >= 0:
                src["along"].append(head)
                dst["along"].append(dep)
                src["rev"].append(dep)
                dst["rev"].append(head)
        for i in range(n):
            src["loop"].append(i)
            dst["loop"].append(i)
        edges = {k: (np.array(src[k], dtype=np.int64), np.array(dst[k], dtype=np.int64))
                 for k in EDGE_LABELS}
        h = rng.normal(size=(n, din))
        got = gcn_layer(ad.constant(h), edges, layer).data
        ref = np.zeros((n, dout))
        for label in EDGE_LABELS:
            w = layer.w[label].data
            b = layer.b[label].data[0]
            gw = layer.gate_w[label].data[:, 0]
            gb = layer.gate_b[label].data[0, 0]
            for u, v in zip(src[label], dst[label]):
                gate = 1.0 / (1.0 + math.exp(-(h[u] @ gw + gb)))
                ref[v] += gate * (h[u] @ w + b)
        ref = np.maximum(ref, 0.0)
        worst = max(worst, float(np.max(np.abs(got - ref))) if got.size else 0.0)
    return worst <= tol, f"max deviation {worst:.2e} over {n_draws} draws"


def _check_bio_roundtrip(n_cases=500):
    from .corpus import EventMention, Sentence, Token

    catalog = LabelCatalog(["w"])
    rng = np.random.default_rng(11)
    for _ in range(n_cases):
        n = int(rng.integers(1, 25))
        spans = []
        cursor = 0
        while cursor < n:
            start = cursor + int(rng.integers(0, 3))
            if start >= n:
                break
            end = min(n, start + int(rng.integers(1, 4)))
            if rng.random() < 0.7:
                spans.append((start, end, catalog.subtypes[int(rng.integers(0, 33))]))
            cursor = end + 1
        tokens = tuple(Token("w", "NOUN", -1 if i == 0 else 0, "dep") for i in range(n))
        events = tuple(EventMention(s, e, sub, ()) for s, e, sub in spans)
        sentence = Sentence(tokens, (), events)
        decoded = decode_trigger_spans(encode_trigger_bio(sentence, catalog), catalog)
        if decoded != spans:
            return False, f"round-trip mismatch for spans {spans}: got {decoded}"
    return True, f"{n_cases} random span sets round-tripped"


def _check_loss_hand_case():
    from .autodiff import constant
    from .training import joint_loss, plain_nll_reference, SentenceLossInput
    from .config import LossConfig

    catalog = LabelCatalog(["w"])
    rng = np.random.default_rng(13)
    logits = rng.normal(size=(3, 67))
    gold_tags = np.array([0, catalog.tag_index["B-Die"], 0])

    class Prep:
        n_real = 3
        mask = np.array([True, True, True])
        entities = ()

    class Out:
        pass

    Prep.gold_tags = gold_tags
    out = Out()
    out.logits = constant(logits)
    item = SentenceLossInput(Prep(), out, [], np.zeros((0, 0), dtype=np.int64))
    loss = float(joint_loss([item], LossConfig(alpha=5.0, beta=1.0), None).data)
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    expected = plain_nll_reference(probs, gold_tags, Prep.mask, alpha=5.0)
    ok = abs(loss - expected) < 1e-12
    return ok, f"|tensor - scalar reference| = {abs(loss - expected):.2e}"


def _check_diamond():
    x = ad.parameter(np.array(1.5))
    ad.backward(x + x)
    ok = x.grad == 2.0
    return ok, f"d/dx (x+x) = {x.grad}"


def _check_adadelta_first_step():
    rho, eps = 0.95, 1e-6
    param = ad.parameter(np.array([0.7]))
    opt = AdaDelta([("p", param)], rho=rho, eps=eps)
    g = 0.3
    param.grad = np.array([g])
    opt.step()
    expected = 0.7 - math.sqrt(eps) / math.sqrt((1 - rho) * g * g + eps) * g
    ok = abs(param.data[0] - expected) < 1e-12
    return ok, f"first-step deviation {abs(param.data[0] - expected):.2e}"


def run_selfcheck(break_op=None):
    """Returns a list of (name, passed, detail)."""
    results = []
    with _corrupt_backward(break_op):
        for name, (build, leaves) in _op_grad_checks().items():
            tol = 1e-6
            try:
                err = ad.finite_difference_check(build, leaves, step=1e-5)
                results.append((f"grad:{name}", err < tol, f"rel-err {err:.2e} (tol {tol:g})"))
            except Exception as exc:  # a corrupted op may push values out of domain
                results.append((f"grad:{name}", False, f"error: {exc}"))
    results.append(("gcn-dense-oracle",) + _check_gcn_oracle())
    results.append(("bio-roundtrip",) + _check_bio_roundtrip())
    results.append(("loss-hand-check",) + _check_loss_hand_case())
    results.append(("backward-diamond",) + _check_diamond())
    results.append(("adadelta-first-step",) + _check_adadelta_first_step())
    return results
