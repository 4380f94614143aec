import math

import numpy as np
import pytest

from evex import autodiff as ad
from evex.config import LossConfig, ModelConfig, TrainConfig
from evex.corpus import EventMention, LabelCatalog
from evex.model import JointModel
from evex.synth import generate_synthetic_corpus, vocabulary_words
from evex.training import (
    AdaDelta,
    DivergenceError,
    SentenceLossInput,
    assign_argument_gold,
    joint_loss,
    plain_nll_reference,
    train,
    trigger_weight_matrix,
)

SMALL = ModelConfig(word_dim=6, feat_dim=3, lstm_units=4, gcn_hidden=8, gcn_layers=1,
                    attention_hidden=5, transform_hidden=5, max_len=12, dropout=0.0)


@pytest.fixture(scope="module")
def catalog():
    return LabelCatalog(vocabulary_words())


@pytest.fixture(scope="module")
def small_model(catalog):
    return JointModel(SMALL, catalog, seed=11)


def forward_item(model, sentence, candidates=None, inject_gold=False):
    prep = model.prepare(sentence)
    out = model.forward(prep)
    if candidates is None:
        from evex.heads import extract_candidates

        candidates = extract_candidates(out.trigger_probs.data, prep.n_real, model.catalog)
        if inject_gold:
            have = set(map(tuple, candidates))
            candidates += [
                (ev.trigger_start, ev.trigger_end, ev.subtype)
                for ev in prep.events
                if (ev.trigger_start, ev.trigger_end, ev.subtype) not in have
            ]
    gold = assign_argument_gold(candidates, prep.events, len(prep.entities), model.catalog)
    return SentenceLossInput(prep, out, candidates, gold)


class TestAssignArgumentGold:
    def test_exact_match_copies_roles(self, catalog):
        events = [EventMention(2, 3, "Die", ((0, "Victim"),))]
        gold = assign_argument_gold([(2, 3, "Die")], events, 2, catalog)
        assert gold[0, 0] == catalog.role_index["Victim"]
        assert gold[0, 1] == catalog.other_role

    def test_spurious_candidate_all_other(self, catalog):
        events = [EventMention(2, 3, "Die", ((0, "Victim"),))]
        gold = assign_argument_gold([(4, 5, "Die")], events, 2, catalog)
        assert (gold == catalog.other_role).all()

    def test_right_span_wrong_subtype_all_other(self, catalog):
        events = [EventMention(2, 3, "Die", ((0, "Victim"),))]
        gold = assign_argument_gold([(2, 3, "Attack")], events, 2, catalog)
        assert (gold == catalog.other_role).all()

    def test_exhaustive_matching_rule(self, catalog):
        # Every candidate key either exactly equals the gold trigger key and
        # inherits roles, or gets OTHER across the board.
        events = [EventMention(1, 3, "Attack", ((1, "Target"),))]
        for start in range(4):
            for end in range(start + 1, 5):
                for subtype in ("Attack", "Die"):
                    gold = assign_argument_gold([(start, end, subtype)], events, 2, catalog)
                    if (start, end, subtype) == (1, 3, "Attack"):
                        assert gold[0, 1] == catalog.role_index["Target"]
                        assert gold[0, 0] == catalog.other_role
                    else:
                        assert (gold == catalog.other_role).all()

    def test_deterministic_and_total(self, catalog):
        a = assign_argument_gold([(0, 1, "Die")], [], 3, catalog)
        b = assign_argument_gold([(0, 1, "Die")], [], 3, catalog)
        np.testing.assert_array_equal(a, b)


class TestJointLoss:
    def test_bias_off_equals_plain_nll(self, small_model):
        sentence = generate_synthetic_corpus(31, 1, multi_event_rate=0.0)[0]
        item = forward_item(small_model, sentence, candidates=[])
        cfg = LossConfig(alpha=1.0, beta=1.0)
        loss = joint_loss([item], cfg, small_model.head_params)
        expected = plain_nll_reference(
            item.out.trigger_probs.data, item.prep.gold_tags, item.prep.mask
        )
        assert float(loss.data) == pytest.approx(expected, abs=1e-12)

    def test_alpha_weighting_hand_computed(self, small_model, catalog):
        sentence = generate_synthetic_corpus(32, 1, multi_event_rate=0.0)[0]
        item = forward_item(small_model, sentence, candidates=[])
        cfg = LossConfig(alpha=5.0, beta=1.0)
        loss = joint_loss([item], cfg, small_model.head_params)
        probs = item.out.trigger_probs.data
        expected = 0.0
        for i in range(item.prep.n_real):
            tag = item.prep.gold_tags[i]
            weight = 5.0 if tag != 0 else 1.0
            expected -= weight * math.log(probs[i, tag])
        assert float(loss.data) == pytest.approx(expected, abs=1e-12)

    def test_argument_terms_match_reference(self, small_model, catalog):
        sentence = generate_synthetic_corpus(33, 1, multi_event_rate=0.0)[0]
        item = forward_item(small_model, sentence, inject_gold=True)
        assert item.candidates and item.prep.entities
        cfg = LossConfig(alpha=2.0, beta=3.0)
        loss = joint_loss([item], cfg, small_model.head_params)
        from evex.heads import argument_classify

        role_probs = [
            [
                argument_classify(item.out.cbar, (s, e), (ent.start, ent.end),
                                  small_model.head_params).data[0]
                for ent in item.prep.entities
            ]
            for s, e, _ in item.candidates
        ]
        expected = plain_nll_reference(
            item.out.trigger_probs.data, item.prep.gold_tags, item.prep.mask,
            role_probs=role_probs, gold_roles=item.gold_roles, alpha=2.0, beta=3.0,
        )
        assert float(loss.data) == pytest.approx(expected, rel=1e-12)

    def test_perfect_predictions_leave_only_l2(self, catalog):
        # Synthetic forward output with one-hot rows: NLL vanishes.
        class FakeOut:
            pass

        sentence = generate_synthetic_corpus(34, 1, multi_event_rate=0.0)[0]
        model = JointModel(SMALL, catalog, seed=1)
        prep = model.prepare(sentence)
        logits = np.full((SMALL.max_len, 67), -1e4)
        for i, tag in enumerate(prep.gold_tags):
            logits[i, tag] = 1e4
        out = FakeOut()
        out.logits = ad.constant(logits)
        item = SentenceLossInput(prep, out, [], np.zeros((0, 0), dtype=np.int64))
        weight = ad.parameter(np.array([[2.0]]))
        loss = joint_loss([item], LossConfig(alpha=1.0, beta=1.0), model.head_params,
                          l2=0.5, params=[weight])
        assert float(loss.data) == pytest.approx(0.5 * 4.0, abs=1e-12)

    def test_alpha_one_is_permutation_invariant_over_tokens(self, small_model, catalog):
        sentence = generate_synthetic_corpus(35, 1, multi_event_rate=0.0)[0]
        item = forward_item(small_model, sentence, candidates=[])
        probs = item.out.trigger_probs.data
        gold = item.prep.gold_tags
        mask = item.prep.mask
        base = plain_nll_reference(probs, gold, mask)
        perm = np.random.default_rng(0).permutation(item.prep.n_real)
        full = np.concatenate([perm, np.arange(item.prep.n_real, len(mask))])
        assert plain_nll_reference(probs[full], gold[full], mask[full]) == pytest.approx(base)

    def test_gradients_on_two_sentence_batch(self, catalog):
        cfg = ModelConfig(word_dim=3, feat_dim=2, lstm_units=2, gcn_hidden=4, gcn_layers=1,
                          attention_hidden=3, transform_hidden=3, max_len=7, dropout=0.0)
        model = JointModel(cfg, LabelCatalog(["the", "soldiers", "died", "met"]), seed=5)
        sentences = generate_synthetic_corpus(36, 2, multi_event_rate=0.0)
        loss_cfg = LossConfig(alpha=3.0, beta=2.0)
        leaves = model.parameters()

        def build():
            items = [forward_item(model, s, inject_gold=True) for s in sentences]
            return joint_loss(items, loss_cfg, model.head_params, l2=1e-4, params=leaves)

        assert ad.finite_difference_check(build, leaves, step=1e-5) < 1e-4


class TestAdaDelta:
    def test_zero_gradient_zero_update(self):
        p = ad.parameter(np.array([1.0, 2.0]))
        opt = AdaDelta([("p", p)])
        p.grad = np.zeros(2)
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, 2.0])

    def test_first_step_closed_form(self):
        rho, eps = 0.95, 1e-6
        p = ad.parameter(np.array([0.7]))
        opt = AdaDelta([("p", p)], rho=rho, eps=eps)
        g = np.array([0.3])
        p.grad = g.copy()
        opt.step()
        expected_delta = -math.sqrt(eps) / math.sqrt((1 - rho) * g[0] ** 2 + eps) * g[0]
        assert p.data[0] == pytest.approx(0.7 + expected_delta, rel=1e-12)

    def test_quadratic_convergence(self):
        p = ad.parameter(np.array([1.0]))
        opt = AdaDelta([("p", p)], rho=0.95, eps=1e-6)
        for _ in range(10_000):
            p.grad = 2.0 * p.data
            opt.step()
            if abs(p.data[0]) < 1e-2:
                break
        assert abs(p.data[0]) < 1e-2

    def test_non_finite_gradient_rejected(self):
        p = ad.parameter(np.array([1.0]))
        opt = AdaDelta([("p", p)])
        p.grad = np.array([np.nan])
        with pytest.raises(DivergenceError, match="p"):
            opt.step()


class TestTrainLoop:
    def test_zero_epochs_returns_initial_state(self, catalog):
        model = JointModel(SMALL, catalog, seed=2)
        before = model.state_dict()
        corpus = generate_synthetic_corpus(37, 4)
        result = train(model, corpus, corpus, TrainConfig(epochs=0, seed=1), LossConfig())
        assert result.metric_log == []
        assert result.best_epoch == -1
        for name, value in before.items():
            np.testing.assert_array_equal(result.best_state[name], value)

    def test_fixed_seed_reproducible_metric_log(self, catalog):
        import json

        corpus = generate_synthetic_corpus(38, 6)
        logs = []
        for _ in range(2):
            model = JointModel(SMALL, catalog, seed=3)
            result = train(model, corpus, corpus,
                           TrainConfig(epochs=2, batch_size=4, seed=9), LossConfig())
            logs.append(json.dumps(result.metric_log, sort_keys=True))
        assert logs[0] == logs[1]

    def test_loss_decreases_early(self, catalog):
        corpus = generate_synthetic_corpus(39, 6, multi_event_rate=0.0)
        drops = []
        for seed in (0, 1, 2):
            model = JointModel(SMALL, catalog, seed=seed)
            result = train(model, corpus, corpus,
                           TrainConfig(epochs=10, batch_size=6, seed=seed, patience=0),
                           LossConfig())
            losses = [r["train_loss"] for r in result.metric_log]
            drops.append(losses[-1] - losses[0])
        assert np.mean(drops) < 0.0
