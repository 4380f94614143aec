"""Sentence encoder: concatenated embeddings, Bi-LSTM, gated typed GCN stack.

Every sentence is padded (or truncated) to ``max_len``. Pad positions carry
the PAD word id, a self-loop-only graph node, and are masked out of attention
and loss downstream. The GCN message for an edge u->v is a per-label affine
map of h_u, scaled by a scalar sigmoid gate computed from h_u, summed over
incoming edges and passed through ReLU. Highway units combine each layer's
input and output; the width-changing first layer (Bi-LSTM width to GCN width)
carries no highway because the carry term requires equal widths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ModelConfig
from .corpus import ALONG, EDGE_LABELS, LOOP, REV, LabelCatalog, Sentence, build_typed_graph

LSTM_GATES = ("i", "f", "o", "c")


# ---------------------------------------------------------------------------
# prepared input
# ---------------------------------------------------------------------------

@dataclass
class PreparedSentence:
    sentence: Sentence
    n_real: int
    word_ids: np.ndarray
    pos_ids: np.ndarray
    positions: np.ndarray
    entity_tag_sets: list
    mask: np.ndarray                # bool, True on real tokens
    edges: dict                     # label -> (src array, dst array)
    entities: tuple                 # mentions that survived truncation
    entity_map: tuple               # new entity index -> original index
    events: tuple                   # gold events remapped to kept entities
    gold_tags: np.ndarray           # per-token gold trigger tag ids (O on pads)


def prepare_sentence(sentence: Sentence, catalog: LabelCatalog, max_len: int) -> PreparedSentence:
    from .corpus import EventMention, encode_entity_bio, encode_trigger_bio

    n_real = min(len(sentence.tokens), max_len)
    word_ids = np.zeros(max_len, dtype=np.int64)          # 0 = PAD
    pos_ids = np.zeros(max_len, dtype=np.int64)
    for i in range(n_real):
        tok = sentence.tokens[i]
        word_ids[i] = catalog.word_id(tok.form)
        pos_ids[i] = catalog.pos_id(tok.pos)
    positions = np.arange(max_len, dtype=np.int64)
    mask = np.zeros(max_len, dtype=bool)
    mask[:n_real] = True

    full_sets = encode_entity_bio(sentence, catalog)
    entity_tag_sets = [full_sets[i] if i < n_real else frozenset() for i in range(max_len)]

    src = {label: [] for label in EDGE_LABELS}
    dst = {label: [] for label in EDGE_LABELS}
    for u, v, label in build_typed_graph(sentence).edges:
        if u < max_len and v < max_len:
            src[label].append(u)
            dst[label].append(v)
    for i in range(n_real, max_len):
        src[LOOP].append(i)
        dst[LOOP].append(i)
    edges = {
        label: (np.asarray(src[label], dtype=np.int64), np.asarray(dst[label], dtype=np.int64))
        for label in EDGE_LABELS
    }

    kept_entities = []
    entity_map = []
    remap = {}
    for old_idx, ent in enumerate(sentence.entities):
        if ent.end <= max_len:
            remap[old_idx] = len(kept_entities)
            kept_entities.append(ent)
            entity_map.append(old_idx)
    kept_events = []
    for ev in sentence.events:
        if ev.trigger_end > max_len:
            continue
        args = tuple((remap[ei], role) for ei, role in ev.arguments if ei in remap)
        kept_events.append(EventMention(ev.trigger_start, ev.trigger_end, ev.subtype, args))

    visible = Sentence(sentence.tokens[:n_real], tuple(kept_entities), tuple(kept_events))
    gold = encode_trigger_bio(visible, catalog)
    gold_tags = np.zeros(max_len, dtype=np.int64)
    gold_tags[:n_real] = gold

    return PreparedSentence(
        sentence=sentence,
        n_real=n_real,
        word_ids=word_ids,
        pos_ids=pos_ids,
        positions=positions,
        entity_tag_sets=entity_tag_sets,
        mask=mask,
        edges=edges,
        entities=tuple(kept_entities),
        entity_map=tuple(entity_map),
        events=tuple(kept_events),
        gold_tags=gold_tags,
    )


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return ad.parameter(rng.uniform(-limit, limit, size=(fan_in, fan_out)))


def _zeros(*shape):
    return ad.parameter(np.zeros(shape))


class LstmDirection:
    def __init__(self, rng, in_dim, units):
        self.w_x = {g: _glorot(rng, in_dim, units) for g in LSTM_GATES}
        self.w_h = {g: _glorot(rng, units, units) for g in LSTM_GATES}
        self.b = {g: _zeros(1, units) for g in LSTM_GATES}
        # Open forget gates at init so early gradients reach across time.
        self.b["f"].data[:] = 1.0

    def named(self, prefix):
        for g in LSTM_GATES:
            yield f"{prefix}.w_x{g}", self.w_x[g]
            yield f"{prefix}.w_h{g}", self.w_h[g]
            yield f"{prefix}.b_{g}", self.b[g]


class GcnLayerParams:
    def __init__(self, rng, in_dim, out_dim):
        self.w = {}
        self.b = {}
        self.gate_w = {}
        self.gate_b = {}
        for label in EDGE_LABELS:
            self.w[label] = _glorot(rng, in_dim, out_dim)
            self.b[label] = _zeros(1, out_dim)
            self.gate_w[label] = _glorot(rng, in_dim, 1)
            self.gate_b[label] = ad.parameter(np.ones((1, 1)))
        self.in_dim = in_dim
        self.out_dim = out_dim

    def named(self, prefix):
        for label in EDGE_LABELS:
            yield f"{prefix}.{label}.w", self.w[label]
            yield f"{prefix}.{label}.b", self.b[label]
            yield f"{prefix}.{label}.gate_w", self.gate_w[label]
            yield f"{prefix}.{label}.gate_b", self.gate_b[label]


class HighwayParams:
    def __init__(self, rng, dim):
        self.w_t = _glorot(rng, dim, dim)
        self.b_t = _zeros(1, dim)
        self.w_h = _glorot(rng, dim, dim)
        self.b_h = _zeros(1, dim)

    def named(self, prefix):
        yield f"{prefix}.w_t", self.w_t
        yield f"{prefix}.b_t", self.b_t
        yield f"{prefix}.w_h", self.w_h
        yield f"{prefix}.b_h", self.b_h


class EncoderParams:
    """All learned tensors of the encoder, addressable by name."""

    def __init__(self, rng, config: ModelConfig, catalog: LabelCatalog):
        self.word_table = ad.parameter(rng.normal(0.0, 0.1, size=(len(catalog.words), config.word_dim)))
        self.pos_table = ad.parameter(rng.normal(0.0, 0.1, size=(len(catalog.pos_tags), config.feat_dim)))
        self.position_table = ad.parameter(
            rng.normal(0.0, 0.1, size=(2 * config.max_len - 1, config.feat_dim))
        )
        # One row per entity BIO tag plus the trailing NONE row.
        self.entity_table = ad.parameter(
            rng.normal(0.0, 0.1, size=(len(catalog.entity_bio) + 1, config.feat_dim))
        )
        self.fw = LstmDirection(rng, config.embed_dim, config.lstm_units)
        self.bw = LstmDirection(rng, config.embed_dim, config.lstm_units)
        self.gcn = []
        self.highway = []
        in_dim = config.lstm_out_dim
        for _ in range(config.gcn_layers):
            self.gcn.append(GcnLayerParams(rng, in_dim, config.gcn_hidden))
            self.highway.append(HighwayParams(rng, config.gcn_hidden) if in_dim == config.gcn_hidden else None)
            in_dim = config.gcn_hidden
        self.none_entity_row = len(catalog.entity_bio)

    def named(self):
        yield "embed.word", self.word_table
        yield "embed.pos", self.pos_table
        yield "embed.position", self.position_table
        yield "embed.entity", self.entity_table
        yield from self.fw.named("lstm.fw")
        yield from self.bw.named("lstm.bw")
        for k, layer in enumerate(self.gcn):
            yield from layer.named(f"gcn.{k}")
        for k, hw in enumerate(self.highway):
            if hw is not None:
                yield from hw.named(f"hw.{k}")


@dataclass
class EncodedSentence:
    reps: Tensor            # max_len x rep_dim, the final representation
    lstm_out: Tensor
    layer_outputs: list     # per-GCN-layer outputs, for inspection


# ---------------------------------------------------------------------------
# forward pieces
# ---------------------------------------------------------------------------

def embed_tokens(prep: PreparedSentence, params: EncoderParams) -> Tensor:
    """Per token: [word | pos | position | sum of entity-type rows]."""
    word = ad.gather_rows(params.word_table, prep.word_ids)
    pos = ad.gather_rows(params.pos_table, prep.pos_ids)
    position = ad.gather_rows(params.position_table, prep.positions)
    flat_rows = []
    flat_tokens = []
    for i, tags in enumerate(prep.entity_tag_sets):
        rows = sorted(tags) if tags else [params.none_entity_row]
        flat_rows.extend(rows)
        flat_tokens.extend([i] * len(rows))
    ent_rows = ad.gather_rows(params.entity_table, np.asarray(flat_rows))
    entity = ad.scatter_sum(ent_rows, np.asarray(flat_tokens), len(prep.entity_tag_sets))
    return ad.concat([word, pos, position, entity], axis=1)


def _lstm_direction(x: Tensor, cell: LstmDirection, units: int, reverse: bool) -> Tensor:
    """One LSTM direction as a single fused tape node.

    The whole unrolled recurrence runs in raw numpy and registers one custom
    backward (standard BPTT), which keeps the tape small; gradients are
    cross-checked against finite differences in the test suite.
    """
    n = x.data.shape[0]
    u = units

    def sig(a):
        return 1.0 / (1.0 + np.exp(-a))

    w_x = np.concatenate([cell.w_x[g].data for g in LSTM_GATES], axis=1)   # in x 4u
    w_h = np.concatenate([cell.w_h[g].data for g in LSTM_GATES], axis=1)   # u x 4u
    bias = np.concatenate([cell.b[g].data for g in LSTM_GATES], axis=1)    # 1 x 4u
    order = np.arange(n - 1, -1, -1) if reverse else np.arange(n)
    px = x.data @ w_x + bias                                               # sequence order

    gates = np.empty((n, 4 * u))        # processing order: [i | f | o | g]
    cells = np.empty((n, u))
    tanh_c = np.empty((n, u))
    h_prev = np.empty((n, u))
    out = np.empty((n, u))              # sequence order
    h = np.zeros(u)
    c = np.zeros(u)
    with np.errstate(over="ignore"):
        for step, t in enumerate(order):
            pre = px[t] + h @ w_h
            i = sig(pre[:u])
            f = sig(pre[u:2 * u])
            o = sig(pre[2 * u:3 * u])
            g = np.tanh(pre[3 * u:])
            h_prev[step] = h
            c = f * c + i * g
            tc = np.tanh(c)
            h = o * tc
            gates[step, :u] = i
            gates[step, u:2 * u] = f
            gates[step, 2 * u:3 * u] = o
            gates[step, 3 * u:] = g
            cells[step] = c
            tanh_c[step] = tc
            out[t] = h

    parents = (
        [x]
        + [cell.w_x[g] for g in LSTM_GATES]
        + [cell.w_h[g] for g in LSTM_GATES]
        + [cell.b[g] for g in LSTM_GATES]
    )

    def rule(grad_out):
        go = grad_out[order]            # processing order
        dpre = np.empty((n, 4 * u))
        dh = np.zeros(u)
        dc = np.zeros(u)
        for step in range(n - 1, -1, -1):
            i = gates[step, :u]
            f = gates[step, u:2 * u]
            o = gates[step, 2 * u:3 * u]
            g = gates[step, 3 * u:]
            tc = tanh_c[step]
            dh_total = go[step] + dh
            dc = dc + dh_total * o * (1.0 - tc * tc)
            do = dh_total * tc
            di = dc * g
            dg = dc * i
            c_prev = cells[step - 1] if step > 0 else 0.0
            df = dc * c_prev
            dpre[step, :u] = di * i * (1.0 - i)
            dpre[step, u:2 * u] = df * f * (1.0 - f)
            dpre[step, 2 * u:3 * u] = do * o * (1.0 - o)
            dpre[step, 3 * u:] = dg * (1.0 - g * g)
            dh = dpre[step] @ w_h.T
            dc = dc * f
        dpre_seq = np.empty_like(dpre)
        dpre_seq[order] = dpre
        dx = dpre_seq @ w_x.T if x.requires_grad else None
        dw_x = x.data.T @ dpre_seq
        dw_h = h_prev.T @ dpre
        db = dpre.sum(axis=0, keepdims=True)
        grads = [dx]
        for k in range(4):
            grads.append(dw_x[:, k * u:(k + 1) * u].copy())
        for k in range(4):
            grads.append(dw_h[:, k * u:(k + 1) * u].copy())
        for k in range(4):
            grads.append(db[:, k * u:(k + 1) * u].copy())
        return grads

    return ad.custom_op(out, parents, rule, name="lstm")


def bilstm_encode(x: Tensor, params: EncoderParams, units: int) -> Tensor:
    fw = _lstm_direction(x, params.fw, units, reverse=False)
    bw = _lstm_direction(x, params.bw, units, reverse=True)
    return ad.concat([fw, bw], axis=1)


def gcn_layer(h: Tensor, edges: dict, layer: GcnLayerParams) -> Tensor:
    """Gated typed graph convolution over the edge lists."""
    n = h.data.shape[0]
    total = None
    for label in EDGE_LABELS:
        src, dst = edges[label]
        if len(src) == 0:
            continue
        u = ad.gather_rows(h, src)
        msg = ad.add(ad.matmul(u, layer.w[label]), layer.b[label])
        gate = ad.sigmoid(ad.add(ad.matmul(u, layer.gate_w[label]), layer.gate_b[label]))
        contrib = ad.scatter_sum(ad.mul(msg, gate), dst, n)
        total = contrib if total is None else ad.add(total, contrib)
    if total is None:
        raise ad.ShapeError("gcn_layer: graph has no edges")
    return ad.relu(total)


def highway(h_prev: Tensor, h_conv: Tensor, hp: HighwayParams) -> Tensor:
    """out = conv + t * relu(W_h prev + b_h) + (1 - t) * prev."""
    if h_prev.data.shape != h_conv.data.shape:
        raise ad.ShapeError(
            f"highway: mismatched shapes {h_prev.data.shape} vs {h_conv.data.shape}"
        )
    t = ad.sigmoid(ad.add(ad.matmul(h_prev, hp.w_t), hp.b_t))
    transformed = ad.relu(ad.add(ad.matmul(h_prev, hp.w_h), hp.b_h))
    return ad.add(ad.add(h_conv, ad.mul(t, transformed)), ad.mul(1.0 - t, h_prev))


def load_pretrained_vectors(params: EncoderParams, catalog: LabelCatalog, path) -> int:
    """Overwrite word-table rows from a text file (word then one number per
    dimension, whitespace separated). Returns the number of rows set; words
    outside the vocabulary are skipped, and a width mismatch is an error."""
    dim = params.word_table.data.shape[1]
    loaded = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if len(values) != dim:
                raise ValueError(
                    f"{path}:{lineno}: expected {dim} values for {word!r}, got {len(values)}"
                )
            idx = catalog.word_index.get(word)
            if idx is not None:
                params.word_table.data[idx] = [float(v) for v in values]
                loaded += 1
    return loaded


def _dropout(x: Tensor, rate: float, train: bool, rng) -> Tensor:
    if not train or rate <= 0.0:
        return x
    mask = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    return ad.mul(x, ad.constant(mask))


def encode(prep: PreparedSentence, params: EncoderParams, config: ModelConfig,
           train: bool = False, rng=None) -> EncodedSentence:
    x = embed_tokens(prep, params)
    x = _dropout(x, config.dropout, train, rng)
    lstm_out = bilstm_encode(x, params, config.lstm_units)
    h = lstm_out
    layer_outputs = []
    for k in range(config.gcn_layers):
        conv = gcn_layer(h, prep.edges, params.gcn[k])
        hw = params.highway[k]
        h = highway(h, conv, hw) if hw is not None else conv
        h = _dropout(h, config.dropout, train, rng)
        layer_outputs.append(h)
    return EncodedSentence(reps=h, lstm_out=lstm_out, layer_outputs=layer_outputs)
