import math
import os
import tempfile

import numpy as np
import pytest

from tslab import ilm as tilm
from tslab import lattice as tlat
from tslab import lm as tlm
from tslab import model as tmodel
from tslab import numerics as tnum

from conftest import VOCAB2, micro_params, rand_features

TRANSCRIPTS = [("a",), ("a", "b"), ("b",), ("b", "a")]


def test_renorm_is_proper_distribution_per_step():
    for seed in range(25):
        params = micro_params(seed=seed)
        est = tilm.zero_encoder_ilm(params, renormalize=True)
        for history in ((), ("a",), ("b", "b")):
            mass = sum(
                math.exp(est.label_log_prob(history, lab))
                for lab in VOCAB2.labels
            )
            assert abs(mass - 1.0) < 1e-12
            assert est.eos_log_prob(history) == 0.0


def test_zero_blank_model_makes_raw_equal_renorm():
    params = micro_params(seed=1)
    arrays = {k: v.copy() for k, v in params.arrays.items()}
    arrays["joint_w2"][0] = 0.0
    arrays["joint_b2"][0] = -1e9  # blank probability underflows to zero
    params = tmodel.TransducerParams(config=params.config, arrays=arrays)
    renorm = tilm.zero_encoder_ilm(params, renormalize=True)
    raw = tilm.zero_encoder_ilm(params, renormalize=False)
    for history in ((), ("b",)):
        for lab in VOCAB2.labels:
            assert abs(
                renorm.label_log_prob(history, lab)
                - raw.label_log_prob(history, lab)
            ) < 1e-12


def test_raw_perplexity_at_least_renorm_perplexity():
    for seed in range(10):
        params = micro_params(seed=seed + 100)
        renorm = tilm.zero_encoder_ilm(params, renormalize=True)
        raw = tilm.zero_encoder_ilm(params, renormalize=False)
        assert tlm.perplexity(raw, TRANSCRIPTS) >= tlm.perplexity(
            renorm, TRANSCRIPTS
        )


def test_density_ratio_equals_elm_on_same_corpus():
    cfg = tilm.DensityRatioConfig(kind="ngram", order=2, delta=0.5)
    dr = tilm.density_ratio_ilm(TRANSCRIPTS, VOCAB2, cfg)
    elm = tlm.train_ngram(TRANSCRIPTS, VOCAB2, order=2, delta=0.5)
    assert dr.provenance == "density_ratio"
    for seq in TRANSCRIPTS:
        assert tlm.lm_log_prob(dr, seq) == tlm.lm_log_prob(elm, seq)


def test_density_ratio_beats_disjoint_elm_on_transcripts():
    other_text = [("b", "b", "b"), ("b", "b")]
    dr = tilm.density_ratio_ilm(TRANSCRIPTS, VOCAB2)
    elm = tlm.train_ngram(other_text, VOCAB2, order=2, delta=0.5)
    assert tlm.perplexity(dr, TRANSCRIPTS) < tlm.perplexity(elm, TRANSCRIPTS)


def test_density_ratio_favors_its_single_sentence():
    dr = tilm.density_ratio_ilm([("a", "b")], VOCAB2)
    target = tlm.lm_log_prob(dr, ("a", "b"))
    for other in ((), ("a",), ("b", "a"), ("b", "b")):
        assert target > tlm.lm_log_prob(dr, other)


def test_mini_net_zero_steps_equals_zero_encoder():
    params = micro_params(seed=2)
    mini, losses = tilm.mini_net_ilm(params, TRANSCRIPTS, steps=0)
    zero = tilm.zero_encoder_ilm(params, renormalize=True)
    assert losses == []
    for seq in TRANSCRIPTS:
        assert tlm.lm_log_prob(mini, seq) == tlm.lm_log_prob(zero, seq)


def test_mini_net_loss_non_increasing_at_small_step():
    params = micro_params(seed=3)
    _, losses = tilm.mini_net_ilm(
        params, TRANSCRIPTS, steps=40, step_size=1e-3
    )
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_mini_net_perplexity_dominates_zero_encoder():
    params = micro_params(seed=4)
    mini, _ = tilm.mini_net_ilm(params, TRANSCRIPTS, steps=150, step_size=0.5)
    zero = tilm.zero_encoder_ilm(params, renormalize=True)
    assert tlm.perplexity(mini, TRANSCRIPTS) <= tlm.perplexity(
        zero, TRANSCRIPTS
    )


def weighted(params_seed, feature_seeds):
    weight = 1.0 / len(feature_seeds)
    return [(rand_features(s, t=4), weight) for s in feature_seeds]


def test_exact_ilm_single_utterance_is_posterior_table():
    params = micro_params(seed=5)
    feats = rand_features(50, t=4)
    est = tilm.exact_ilm(params, [(feats, 1.0)], max_len=4)
    table = tlat.posterior_table(params, feats, max_len=4)
    for seq, logp in table.items():
        assert abs(est.table[seq] - logp) < 1e-12


def test_exact_ilm_two_identical_utterances():
    params = micro_params(seed=6)
    feats = rand_features(60, t=3)
    est = tilm.exact_ilm(params, [(feats, 0.5), (feats, 0.5)], max_len=3)
    table = tlat.posterior_table(params, feats, max_len=3)
    for seq, logp in table.items():
        assert abs(est.table[seq] - logp) < 1e-12


def test_exact_ilm_normalizes_and_matches_weighted_sum():
    params = micro_params(seed=7)
    items = weighted(7, range(8))
    est = tilm.exact_ilm(params, items, max_len=4)
    assert abs(tnum.log_sum_exp(list(est.table.values()))) < 1e-9
    tables = [tlat.posterior_table(params, f, max_len=4) for f, _ in items]
    for seq in est.table:
        want = math.fsum(
            0.125 * math.exp(t[seq]) for t in tables if seq in t
        )
        assert abs(math.exp(est.table[seq]) - want) < 1e-12


def test_exact_ilm_linear_in_weights():
    params = micro_params(seed=8)
    f1, f2 = rand_features(81, t=3), rand_features(82, t=3)
    mix = tilm.exact_ilm(params, [(f1, 0.25), (f2, 0.75)], max_len=3)
    one = tilm.exact_ilm(params, [(f1, 1.0)], max_len=3)
    two = tilm.exact_ilm(params, [(f2, 1.0)], max_len=3)
    for seq in mix.table:
        want = 0.25 * math.exp(one.table[seq]) + 0.75 * math.exp(two.table[seq])
        assert abs(math.exp(mix.table[seq]) - want) < 1e-12


def test_every_estimate_has_finite_training_perplexity():
    params = micro_params(seed=9)
    estimates = [
        tilm.zero_encoder_ilm(params, renormalize=True),
        tilm.zero_encoder_ilm(params, renormalize=False),
        tilm.density_ratio_ilm(TRANSCRIPTS, VOCAB2),
        tilm.mini_net_ilm(params, TRANSCRIPTS, steps=5)[0],
        tilm.exact_ilm(
            params, weighted(9, range(3)), max_len=4
        ),
    ]
    for est in estimates:
        assert math.isfinite(tlm.perplexity(est, TRANSCRIPTS))


def test_exact_ilm_file_round_trip():
    params = micro_params(seed=10)
    est = tilm.exact_ilm(params, [(rand_features(11, t=3), 1.0)], max_len=3)
    with tempfile.TemporaryDirectory() as td:
        path = os.path.join(td, "ilm.tsv")
        tilm.write_exact_ilm(path, est)
        loaded = tilm.read_exact_ilm(path)
    assert loaded.table == est.table


def test_only_exact_estimates_export():
    params = micro_params(seed=12)
    with pytest.raises(ValueError):
        tilm.write_exact_ilm("never.tsv", tilm.zero_encoder_ilm(params))
