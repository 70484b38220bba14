import math

import numpy as np
import pytest

from tslab import lattice as tlat
from tslab import model as tmodel
from tslab import numerics as tnum

from conftest import VOCAB2, VOCAB3, micro_params, rand_features

NEG_INF = float("-inf")


def chain_blank_log_prob(params, feats):
    h = tmodel.encode(params, feats)
    c = tmodel.predict_context(params, ())
    total = 0.0
    for t in range(h.shape[0]):
        total += math.log(tmodel.step_posterior(params, h[t], c)[0])
    return total


def test_all_blank_path():
    params = micro_params(seed=0)
    feats = rand_features(0, t=4)
    got = tlat.seq_log_prob(params, feats, ())
    assert abs(got - chain_blank_log_prob(params, feats)) < 1e-12


def test_no_blank_path():
    params = micro_params(seed=1)
    feats = rand_features(1, t=3)
    target = ("a", "b", "a")
    h = tmodel.encode(params, feats)
    total = 0.0
    history = ()
    for t, lab in enumerate(target):
        c = tmodel.predict_context(params, history)
        total += math.log(
            tmodel.step_posterior(params, h[t], c)[VOCAB2.index(lab)]
        )
        history = history + (lab,)
    assert abs(tlat.seq_log_prob(params, feats, target) - total) < 1e-12


def test_single_frame_single_label():
    params = micro_params(seed=2)
    feats = rand_features(2, t=1)
    h = tmodel.encode(params, feats)
    c = tmodel.predict_context(params, ())
    want = math.log(tmodel.step_posterior(params, h[0], c)[VOCAB2.index("a")])
    assert abs(tlat.seq_log_prob(params, feats, ("a",)) - want) < 1e-12


def test_longer_target_than_frames_scores_zero():
    params = micro_params(seed=3)
    feats = rand_features(3, t=2)
    assert tlat.seq_log_prob(params, feats, ("a", "b", "a")) == NEG_INF
    assert tlat.brute_force_seq_log_prob(params, feats, ("a", "b", "a")) == NEG_INF


def test_longer_target_than_frames_fails_training():
    params = micro_params(seed=3)
    feats = rand_features(3, t=2)
    with pytest.raises(ValueError):
        tlat.ce_loss_and_grad(params, [(feats, ("a", "b", "a"))])


def test_dp_matches_brute_force_enumeration():
    params = micro_params(seed=4)
    feats = rand_features(4, t=4)
    got = tlat.seq_log_prob(params, feats, ("a", "b"))
    want = tlat.brute_force_seq_log_prob(params, feats, ("a", "b"))
    assert abs(got - want) < 1e-10


def test_dp_matches_brute_force_across_seeded_cases():
    case = 0
    for vocab in (VOCAB2, VOCAB3):
        for t in (1, 2, 3, 5):
            for s in range(t + 1):
                case += 1
                params = micro_params(seed=case, vocab=vocab)
                feats = rand_features(case, t=t)
                labels = tuple(
                    vocab.labels[i % vocab.size] for i in range(s)
                )
                got = tlat.seq_log_prob(params, feats, labels)
                want = tlat.brute_force_seq_log_prob(params, feats, labels)
                assert abs(got - want) < 1e-10


def test_cut_invariance():
    params = micro_params(seed=5)
    feats = rand_features(5, t=5)
    target = ("a", "b", "a")
    alpha, beta, _ = tlat.lattice_forward_backward(params, feats, target)
    logp = alpha[-1, -1]
    assert abs(beta[0, 0] - logp) < 1e-9
    for t in range(alpha.shape[0]):
        cut = tnum.log_sum_exp(
            [alpha[t, s] + beta[t, s] for s in range(alpha.shape[1])]
        )
        assert abs(cut - logp) < 1e-9


def test_posterior_table_normalizes():
    params = micro_params(seed=6)
    feats = rand_features(6, t=4)
    table = tlat.posterior_table(params, feats, max_len=4)
    total = tnum.log_sum_exp(list(table.values()))
    assert abs(total) < 1e-9


def test_posterior_table_single_label_single_frame():
    vocab1 = tmodel.Vocabulary(labels=("a",))
    params = micro_params(seed=7, vocab=vocab1)
    feats = rand_features(7, t=1)
    table = tlat.posterior_table(params, feats, max_len=1)
    assert abs(math.exp(table[()]) + math.exp(table[("a",)]) - 1.0) < 1e-15


def test_posterior_table_consistent_with_seq_log_prob():
    params = micro_params(seed=8)
    feats = rand_features(8, t=3)
    table = tlat.posterior_table(params, feats, max_len=3)
    for seq, logp in table.items():
        assert abs(logp - tlat.seq_log_prob(params, feats, seq)) < 1e-12


def test_ce_loss_near_zero_at_forced_optimum():
    # Zero weights except a large output bias on label 'a': P(a) -> 1.
    params = micro_params(seed=9)
    arrays = {k: np.zeros_like(v) for k, v in params.arrays.items()}
    arrays["joint_b2"][VOCAB2.index("a")] = 50.0
    params = tmodel.TransducerParams(config=params.config, arrays=arrays)
    feats = rand_features(9, t=1)
    out = tlat.ce_loss_and_grad(params, [(feats, ("a",))])
    assert out.loss < 1e-12


def test_ce_batch_of_identical_pairs_averages():
    params = micro_params(seed=10)
    feats = rand_features(10, t=3)
    pair = (feats, ("a",))
    single = tlat.ce_loss_and_grad(params, [pair])
    double = tlat.ce_loss_and_grad(params, [pair, pair])
    assert abs(single.loss - double.loss) < 1e-15
    np.testing.assert_allclose(single.grad, double.grad, rtol=0, atol=1e-15)


@pytest.mark.parametrize(
    "context_size,pred_cell",
    [(1, "elman"), (None, "elman"), (None, "lstm")],
)
def test_ce_gradients_match_finite_differences(context_size, pred_cell):
    params = micro_params(
        seed=11, scale=0.5, context_size=context_size, pred_cell=pred_cell
    )
    feats = rand_features(11, t=4)
    batch = [(feats, ("a", "b")), (rand_features(12, t=3), ("b",))]

    def loss_fn(flat):
        return tlat.ce_loss_and_grad(params.with_flat(flat), batch).loss

    def analytic(flat):
        return tlat.ce_loss_and_grad(params.with_flat(flat), batch).grad

    report = tnum.grad_check(loss_fn, analytic, params.flatten())
    assert report.max_rel_error < 1e-4


def test_mean_blank_probability_in_unit_interval():
    params = micro_params(seed=13)
    batch = [(rand_features(13, t=4), ("a",)), (rand_features(14, t=2), ())]
    value = tlat.mean_blank_probability(params, batch)
    assert 0.0 < value < 1.0
