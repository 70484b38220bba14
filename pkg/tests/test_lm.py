import itertools
import math

import mpmath
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tslab import lm as tlm
from tslab import model as tmodel

from conftest import VOCAB2

VOCAB1 = tmodel.Vocabulary(labels=("a",))
VOCAB4 = tmodel.Vocabulary(labels=("a", "b", "c", "d"))


class UnitScorer(tlm.SequenceScorer):
    """Assigns probability one to everything; PPL must be one."""

    def label_log_prob(self, history, label):
        return 0.0

    def eos_log_prob(self, history):
        return 0.0


def test_observe_hand_count():
    lm = tlm.NGramLM(VOCAB1, order=1, delta=1.0)
    lm.observe((), "a")
    assert abs(math.exp(lm.label_log_prob((), "a")) - 2.0 / 3.0) < 1e-15
    assert abs(math.exp(lm.eos_log_prob(())) - 1.0 / 3.0) < 1e-15


def test_large_delta_approaches_uniform():
    corpus = [("a", "b"), ("b",)]
    lm = tlm.train_ngram(corpus, VOCAB2, order=2, delta=1e9)
    for successor_prob in (
        math.exp(lm.label_log_prob(("a",), "b")),
        math.exp(lm.eos_log_prob(("a",))),
    ):
        assert abs(successor_prob - 1.0 / 3.0) < 1e-6


def test_unseen_context_pure_smoothing():
    lm = tlm.train_ngram([("a",)], VOCAB4, order=2, delta=0.5)
    assert abs(
        math.exp(lm.label_log_prob(("d",), "c")) - 1.0 / 5.0
    ) < 1e-15


def test_uniform_lm_sequence_log_prob():
    lm = tlm.NGramLM(VOCAB4, order=1, delta=1.0)
    got = tlm.lm_log_prob(lm, ("a", "b"))
    assert abs(got - 3.0 * math.log(1.0 / 5.0)) < 1e-12


def test_empty_sequence_log_prob_is_eos_only():
    lm = tlm.train_ngram([("a",), ()], VOCAB2, order=2, delta=0.5)
    assert tlm.lm_log_prob(lm, ()) == lm.eos_log_prob(())


def test_bigram_hand_chain_product():
    corpus = [("a", "b"), ("a",), ("b", "b")]
    lm = tlm.train_ngram(corpus, VOCAB2, order=2, delta=1.0)
    # Events: ()->a twice, ()->b once; (a,)->b once, (a,)->EOS once;
    # (b,)->b once, (b,)->EOS twice.  Successor space size is 3.
    want = (
        math.log((2 + 1) / (3 + 3))      # P(a | start)
        + math.log((1 + 1) / (2 + 3))    # P(b | a)
        + math.log((2 + 1) / (3 + 3))    # P(EOS | b)
    )
    assert abs(tlm.lm_log_prob(lm, ("a", "b")) - want) < 1e-12


def test_perplexity_uniform_scorer():
    lm = tlm.NGramLM(VOCAB4, order=1, delta=1.0)
    assert abs(tlm.perplexity(lm, [("a", "b"), ("c",)]) - 5.0) < 1e-12


def test_perplexity_unit_scorer():
    assert tlm.perplexity(UnitScorer(), [("a",), ()]) == 1.0


def test_perplexity_matches_high_precision_recomputation():
    train = [("a", "b"), ("b", "a"), ("a",)]
    held_out = [("b",), ("a", "a")]
    lm = tlm.train_ngram(train, VOCAB2, order=2, delta=0.5)
    got = tlm.perplexity(lm, held_out)
    logs = [mpmath.mpf(tlm.lm_log_prob(lm, seq)) for seq in held_out]
    tokens = sum(len(seq) + 1 for seq in held_out)
    want = float(mpmath.e ** (-mpmath.fsum(logs) / tokens))
    assert abs(got - want) < 1e-12


@given(st.permutations([("a", "b"), ("b",), ("a",), ("b", "a", "b")]))
def test_perplexity_order_invariant(corpus):
    lm = tlm.train_ngram([("a", "b"), ("b",)], VOCAB2, order=2, delta=0.5)
    assert tlm.perplexity(lm, corpus) == tlm.perplexity(
        lm, [("a", "b"), ("b",), ("a",), ("b", "a", "b")]
    )


def test_implied_sequence_mass_bounded_by_one():
    lm = tlm.train_ngram([("a", "b"), ("b",)], VOCAB2, order=2, delta=0.5)
    mass = 0.0
    for length in range(9):
        for seq in itertools.product(VOCAB2.labels, repeat=length):
            mass += math.exp(tlm.lm_log_prob(lm, seq))
    assert mass <= 1.0 + 1e-12


def test_implied_sequence_mass_approaches_one():
    # Truncation error at length 8 is the continuation mass to the 9th
    # power, so the check needs an EOS-heavy corpus to land within 1e-6.
    corpus = [()] * 18 + [("a",), ("b",)]
    lm = tlm.train_ngram(corpus, VOCAB2, order=1, delta=0.5)
    mass = 0.0
    for length in range(9):
        for seq in itertools.product(VOCAB2.labels, repeat=length):
            mass += math.exp(tlm.lm_log_prob(lm, seq))
    assert mass <= 1.0 + 1e-12
    assert abs(mass - 1.0) < 1e-6


def test_train_ngram_deterministic():
    corpus = [("a", "b"), ("b",), ("a",)]
    one = tlm.train_ngram(corpus, VOCAB2, order=2, delta=0.5)
    two = tlm.train_ngram(list(corpus), VOCAB2, order=2, delta=0.5)
    assert one.counts == two.counts
    assert tlm.lm_log_prob(one, ("a", "b")) == tlm.lm_log_prob(two, ("a", "b"))


def test_ngram_rejects_unknown_symbols():
    lm = tlm.train_ngram([("a",)], VOCAB2, order=1, delta=0.5)
    with pytest.raises(ValueError):
        lm.label_log_prob((), "zz")


def test_neural_lm_training_reduces_loss():
    corpus = [("a", "b"), ("a",), ("b", "b"), ("a", "b")]
    cfg = tlm.NeuralLMConfig(vocab=VOCAB2, emb_dim=6, hidden_dim=8)
    lm, losses = tlm.train_neural_lm(corpus, cfg, steps=60, step_size=0.5, seed=0)
    assert losses[-1] < losses[0]


def test_neural_lm_step_distribution_normalizes():
    corpus = [("a", "b"), ("b",)]
    cfg = tlm.NeuralLMConfig(vocab=VOCAB2, emb_dim=6, hidden_dim=8)
    lm, _ = tlm.train_neural_lm(corpus, cfg, steps=20, step_size=0.5, seed=1)
    for history in ((), ("a",), ("b", "a")):
        mass = sum(
            math.exp(lm.label_log_prob(history, lab)) for lab in VOCAB2.labels
        ) + math.exp(lm.eos_log_prob(history))
        assert abs(mass - 1.0) < 1e-12


def test_neural_lm_seeded_training_is_reproducible():
    corpus = [("a", "b"), ("b",)]
    cfg = tlm.NeuralLMConfig(vocab=VOCAB2, emb_dim=6, hidden_dim=8)
    one, _ = tlm.train_neural_lm(corpus, cfg, steps=15, step_size=0.5, seed=2)
    two, _ = tlm.train_neural_lm(corpus, cfg, steps=15, step_size=0.5, seed=2)
    assert tlm.lm_log_prob(one, ("a", "b")) == tlm.lm_log_prob(two, ("a", "b"))


def test_corpus_file_round_trip():
    import os
    import tempfile

    corpus = [("a", "b"), (), ("b",)]
    with tempfile.TemporaryDirectory() as td:
        path = os.path.join(td, "corpus.txt")
        tlm.write_corpus(path, corpus)
        assert tlm.read_corpus(path) == corpus
