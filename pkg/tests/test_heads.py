import itertools

import numpy as np
import pytest

from evex import autodiff as ad
from evex.config import ModelConfig
from evex.corpus import LabelCatalog
from evex.heads import (
    HeadParams,
    argument_classify,
    argument_logits,
    extract_candidates,
    self_attention_context,
    span_mean,
    trigger_classify,
)
from evex.model import JointModel
from evex.synth import generate_synthetic_corpus, vocabulary_words

CFG = ModelConfig(word_dim=6, feat_dim=3, lstm_units=4, gcn_hidden=8, gcn_layers=1,
                  attention_hidden=5, transform_hidden=5, max_len=10, dropout=0.0)


@pytest.fixture(scope="module")
def catalog():
    return LabelCatalog(vocabulary_words())


@pytest.fixture(scope="module")
def params(catalog):
    return HeadParams(np.random.default_rng(0), CFG.rep_dim, CFG,
                      len(catalog.trigger_tags), len(catalog.roles))


class TestAttention:
    def test_single_token_has_zero_exclusion_sum(self, params):
        d = np.random.default_rng(1).normal(size=(1, CFG.rep_dim))
        score, context = self_attention_context(ad.constant(d), np.array([True]), params)
        assert score.data[0, 0] == pytest.approx(1.0)
        np.testing.assert_allclose(context.data[0, :CFG.rep_dim], 0.0, atol=1e-12)
        np.testing.assert_allclose(context.data[0, CFG.rep_dim:], d[0])

    def test_scores_sum_to_one_over_real_positions(self, params):
        d = np.random.default_rng(2).normal(size=(6, CFG.rep_dim))
        mask = np.array([True, True, True, True, False, False])
        score, _ = self_attention_context(ad.constant(d), mask, params)
        assert abs(score.data[mask].sum() - 1.0) < 1e-9
        np.testing.assert_array_equal(score.data[~mask], 0.0)

    def test_shift_invariance_of_pre_exp_logits(self, params, catalog):
        d = np.random.default_rng(3).normal(size=(5, CFG.rep_dim))
        mask = np.ones(5, dtype=bool)
        base, _ = self_attention_context(ad.constant(d), mask, params)
        shifted_params = HeadParams(np.random.default_rng(0), CFG.rep_dim, CFG,
                                    len(catalog.trigger_tags), len(catalog.roles))
        shifted_params.b2.data[:] = params.b2.data + 123.0
        shifted, _ = self_attention_context(ad.constant(d), mask, shifted_params)
        np.testing.assert_allclose(shifted.data, base.data, atol=1e-12)

    def test_all_pad_rejected(self, params):
        d = ad.constant(np.zeros((3, CFG.rep_dim)))
        with pytest.raises(ad.ShapeError):
            self_attention_context(d, np.zeros(3, dtype=bool), params)

    def test_context_rows_differ_when_reps_differ(self, params):
        d = np.random.default_rng(4).normal(size=(4, CFG.rep_dim))
        _, context = self_attention_context(ad.constant(d), np.ones(4, dtype=bool), params)
        for i, j in itertools.combinations(range(4), 2):
            assert not np.allclose(context.data[i], context.data[j])


class TestTriggerHead:
    def test_rows_sum_to_one(self, params):
        context = ad.constant(np.random.default_rng(5).normal(size=(4, 2 * CFG.rep_dim)))
        probs, cbar = trigger_classify(context, params)
        np.testing.assert_allclose(probs.data.sum(axis=1), 1.0, atol=1e-9)
        assert cbar.data.shape == (4, CFG.transform_hidden)

    def test_zero_parameters_give_uniform(self, catalog):
        zp = HeadParams(np.random.default_rng(6), CFG.rep_dim, CFG,
                        len(catalog.trigger_tags), len(catalog.roles))
        for _, t in zp.named():
            t.data[:] = 0.0
        context = ad.constant(np.random.default_rng(7).normal(size=(3, 2 * CFG.rep_dim)))
        probs, _ = trigger_classify(context, zp)
        np.testing.assert_allclose(probs.data, 1.0 / 67.0)


class TestCandidateExtraction:
    def test_uniform_rows_give_no_candidates(self, catalog):
        probs = np.full((4, 67), 1.0 / 67.0)
        assert extract_candidates(probs, 4, catalog) == []

    def test_argmax_tag_decoding(self, catalog):
        names = ["B-Attack", "O", "B-Die", "I-Die"]
        probs = np.zeros((4, 67))
        for i, name in enumerate(names):
            probs[i, catalog.tag_index[name]] = 1.0
        assert extract_candidates(probs, 4, catalog) == [(0, 1, "Attack"), (2, 4, "Die")]

    def test_pad_rows_ignored(self, catalog):
        probs = np.zeros((4, 67))
        probs[:, catalog.tag_index["B-Die"]] = 1.0
        assert extract_candidates(probs, 2, catalog) == [(0, 1, "Die"), (1, 2, "Die")]

    def test_agrees_with_reference_on_all_short_sequences(self, catalog):
        from test_corpus import reference_decode

        alphabet = ["O", "B-Die", "I-Die", "B-Attack", "I-Attack"]
        for length in range(1, 5):
            for names in itertools.product(alphabet, repeat=length):
                probs = np.zeros((length, 67))
                for i, name in enumerate(names):
                    probs[i, catalog.tag_index[name]] = 1.0
                got = extract_candidates(probs, length, catalog)
                assert got == reference_decode(list(names))


class TestArgumentHead:
    def test_single_token_span_pooling_is_identity(self):
        rng = np.random.default_rng(8)
        m = rng.normal(size=(5, 3))
        out = span_mean(ad.constant(m), 2, 3)
        np.testing.assert_allclose(out.data[0], m[2])

    def test_span_mean_averages(self):
        m = np.array([[1.0], [3.0], [5.0]])
        assert span_mean(ad.constant(m), 0, 2).data[0, 0] == 2.0

    def test_empty_span_rejected(self):
        with pytest.raises(ad.ShapeError):
            span_mean(ad.constant(np.zeros((3, 2))), 2, 2)

    def test_distribution_sums_to_one(self, params):
        cbar = ad.constant(np.random.default_rng(9).normal(size=(6, CFG.transform_hidden)))
        y = argument_classify(cbar, (0, 2), (3, 5), params)
        assert y.data.shape == (1, 37)
        assert abs(y.data.sum() - 1.0) < 1e-9

    def test_pooling_order_invariant_within_span(self, params):
        rng = np.random.default_rng(10)
        cbar = rng.normal(size=(6, CFG.transform_hidden))
        base = argument_classify(ad.constant(cbar), (1, 4), (4, 6), params).data
        swapped = cbar.copy()
        swapped[[1, 3]] = swapped[[3, 1]]
        out = argument_classify(ad.constant(swapped), (1, 4), (4, 6), params).data
        np.testing.assert_allclose(out, base, atol=1e-12)

    def test_gradients_through_heads(self, catalog):
        rng = np.random.default_rng(11)
        params = HeadParams(rng, CFG.rep_dim, CFG, 7, 5)
        d = ad.parameter(rng.normal(size=(4, CFG.rep_dim)))
        mask = np.ones(4, dtype=bool)
        leaves = [d] + [t for _, t in params.named()]
        pick_t = ad.constant(rng.normal(size=(4, 7)))
        pick_a = ad.constant(rng.normal(size=(1, 5)))

        def build():
            _, context = self_attention_context(d, mask, params)
            probs, cbar = trigger_classify(context, params)
            trig_term = ad.reduce_sum(ad.mul(pick_t, ad.log(probs)))
            arg_term = ad.reduce_sum(
                ad.mul(pick_a, argument_logits(cbar, (0, 2), (2, 4), params))
            )
            return ad.add(trig_term, arg_term)

        assert ad.finite_difference_check(build, leaves, step=1e-5) < 1e-4


class TestPredictSentence:
    def test_prediction_shapes_and_invariants(self, catalog):
        from evex.heads import predict_sentence

        model = JointModel(CFG, catalog, seed=3)
        sentence = generate_synthetic_corpus(30, 1, multi_event_rate=0.0)[0]
        pred = predict_sentence(model, sentence)
        n = min(len(sentence.tokens), CFG.max_len)
        assert len(pred.trigger_tag_ids) == n
        assert pred.trigger_distributions.shape == (n, 67)
        np.testing.assert_allclose(pred.trigger_distributions.sum(axis=1), 1.0, atol=1e-9)
        assert abs(pred.attention.sum() - 1.0) < 1e-9
        for (ci, ei), dist in pred.role_distributions.items():
            assert abs(dist.sum() - 1.0) < 1e-9
        for start, end, subtype, args in pred.events:
            assert 0 <= start < end <= n
            for orig_idx, role in args:
                assert role != "OTHER"
                assert 0 <= orig_idx < len(sentence.entities)

    def test_no_entities_means_no_arguments(self, catalog):
        from evex.corpus import Sentence, Token
        from evex.heads import predict_sentence

        model = JointModel(CFG, catalog, seed=4)
        sentence = Sentence(
            tuple(Token(w, "NOUN", h, "dep") for w, h in [("the", 1), ("soldiers", -1)]),
            (), (),
        )
        pred = predict_sentence(model, sentence)
        for ev in pred.events:
            assert ev[3] == []
        assert pred.role_distributions == {}
