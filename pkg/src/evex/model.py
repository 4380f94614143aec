"""The joint model: encoder plus heads, with named-parameter access."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ModelConfig
from .corpus import LabelCatalog
from .encoder import EncoderParams, PreparedSentence, encode, prepare_sentence
from .heads import HeadParams, self_attention_context, trigger_logits, trigger_transform


@dataclass
class ForwardPass:
    encoded: object
    score: Tensor           # max_len x 1 attention scores (zeros on pads)
    context: Tensor         # max_len x 2*rep_dim
    cbar: Tensor            # max_len x transform_hidden
    logits: Tensor          # max_len x n_tags
    trigger_probs: Tensor   # softmax of logits


class JointModel:
    def __init__(self, config: ModelConfig, catalog: LabelCatalog, seed: int = 0):
        self.config = config
        self.catalog = catalog
        rng = np.random.default_rng(seed)
        self.encoder_params = EncoderParams(rng, config, catalog)
        self.head_params = HeadParams(
            rng, config.rep_dim, config, len(catalog.trigger_tags), len(catalog.roles)
        )

    def named_parameters(self):
        yield from self.encoder_params.named()
        yield from self.head_params.named()

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def prepare(self, sentence) -> PreparedSentence:
        return prepare_sentence(sentence, self.catalog, self.config.max_len)

    def forward(self, prep: PreparedSentence, train: bool = False, rng=None) -> ForwardPass:
        encoded = encode(prep, self.encoder_params, self.config, train=train, rng=rng)
        score, context = self_attention_context(encoded.reps, prep.mask, self.head_params)
        cbar = trigger_transform(context, self.head_params)
        logits = trigger_logits(cbar, self.head_params)
        probs = ad.softmax(logits, axis=1)
        return ForwardPass(
            encoded=encoded, score=score, context=context, cbar=cbar,
            logits=logits, trigger_probs=probs,
        )

    def state_dict(self) -> dict:
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def load_state_dict(self, state: dict) -> None:
        mine = dict(self.named_parameters())
        missing = sorted(set(mine) - set(state))
        extra = sorted(set(state) - set(mine))
        if missing or extra:
            raise ValueError(f"parameter mismatch: missing {missing}, unexpected {extra}")
        for name, tensor in mine.items():
            if tensor.data.shape != state[name].shape:
                raise ValueError(
                    f"shape mismatch for {name}: {tensor.data.shape} vs {state[name].shape}"
                )
            tensor.data[...] = state[name]
