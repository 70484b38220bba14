import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tslab import decoder as tdec
from tslab import ilm as tilm
from tslab import lattice as tlat
from tslab import lm as tlm

from conftest import VOCAB2, micro_params, rand_features

ELM = tlm.train_ngram(
    [("a",), ("a", "b"), ("b",), ("b", "a"), ()], VOCAB2, order=2, delta=0.5
)

prob_vectors = st.lists(
    st.floats(min_value=1e-6, max_value=1.0), min_size=2, max_size=6
).map(lambda xs: np.array(xs) / np.sum(xs))


def test_reduce_blank_identity_parameters():
    dist = np.array([0.5, 0.3, 0.2])
    linear = tdec.BlankReduction(mode="linear", rho=1.0)
    expo = tdec.BlankReduction(mode="exponential", gamma=1.0)
    np.testing.assert_allclose(tdec.reduce_blank(dist, linear), dist, atol=1e-15)
    np.testing.assert_allclose(tdec.reduce_blank(dist, expo), dist, atol=1e-15)


def test_reduce_blank_hand_case():
    dist = np.array([0.5, 0.3, 0.2])
    out = tdec.reduce_blank(dist, tdec.BlankReduction(mode="linear", rho=0.5))
    np.testing.assert_allclose(
        out, [1.0 / 3.0, 0.4, 4.0 / 15.0], rtol=0, atol=1e-15
    )


@given(prob_vectors, st.floats(min_value=0.05, max_value=1.0))
def test_reduce_blank_normalizes_and_keeps_label_order(dist, rho):
    out = tdec.reduce_blank(dist, tdec.BlankReduction(mode="linear", rho=rho))
    assert abs(out.sum() - 1.0) < 1e-12
    order = np.argsort(dist[1:], kind="stable")
    np.testing.assert_array_equal(order, np.argsort(out[1:], kind="stable"))


@given(prob_vectors, st.floats(min_value=0.1, max_value=0.9))
def test_reduce_blank_monotone_in_rho(dist, rho):
    smaller = tdec.reduce_blank(
        dist, tdec.BlankReduction(mode="linear", rho=rho * 0.5)
    )
    larger = tdec.reduce_blank(
        dist, tdec.BlankReduction(mode="linear", rho=rho)
    )
    assert smaller[0] < larger[0]


def test_reduce_blank_rejects_non_distributions():
    with pytest.raises(ValueError):
        tdec.reduce_blank(
            np.array([0.9, 0.3]), tdec.BlankReduction(mode="linear", rho=0.5)
        )


def test_blank_reduction_validation():
    with pytest.raises(ValueError):
        tdec.BlankReduction(mode="nope")
    with pytest.raises(ValueError):
        tdec.BlankReduction(mode="linear", rho=1.5)
    with pytest.raises(ValueError):
        tdec.BlankReduction(mode="exponential", gamma=0.5)


def test_beam_config_validation():
    with pytest.raises(ValueError):
        tdec.BeamConfig(fusion_mode="sf", lambda2=0.5)
    with pytest.raises(ValueError):
        tdec.BeamConfig(
            fusion_mode="sf",
            blank_reduction=tdec.BlankReduction(mode="linear", rho=0.5),
        )
    with pytest.raises(ValueError):
        tdec.BeamConfig(fusion_mode="sf_dr", lambda1=0.3, lambda2=-2.0,
                        beam_size=0)


def test_sf_dr_requires_density_ratio_provenance():
    params = micro_params(seed=0)
    feats = rand_features(0, t=2)
    config = tdec.BeamConfig(fusion_mode="sf_dr", lambda1=0.3, lambda2=0.2)
    zero = tilm.zero_encoder_ilm(params)
    with pytest.raises(ValueError):
        tdec.beam_search(params, feats, config, elm=ELM, ilm=zero)


def test_fusion_none_equals_posterior_argmax():
    for seed in range(6):
        params = micro_params(seed=seed)
        feats = rand_features(seed, t=4)
        config = tdec.BeamConfig(beam_size=81, fusion_mode="none")
        top = tdec.beam_search(params, feats, config).hyps[0]
        table = tlat.posterior_table(params, feats, max_len=4)
        want = min(table.items(), key=lambda kv: (-kv[1], len(kv[0]), kv[0]))
        assert top.labels == want[0]


def exhaustive_setups(seed):
    params = micro_params(seed=seed)
    dr = tilm.density_ratio_ilm([("a",), ("b", "a")], VOCAB2)
    zero = tilm.zero_encoder_ilm(params)
    reduction = tdec.BlankReduction(mode="linear", rho=0.5)
    expo = tdec.BlankReduction(mode="exponential", gamma=2.0)
    return params, [
        (tdec.BeamConfig(beam_size=81, fusion_mode="none"), None, None),
        (tdec.BeamConfig(beam_size=81, fusion_mode="sf", lambda1=0.4), ELM, None),
        (
            tdec.BeamConfig(
                beam_size=81, fusion_mode="sf_ilm", lambda1=0.4, lambda2=0.2
            ),
            ELM,
            zero,
        ),
        (
            tdec.BeamConfig(
                beam_size=81, fusion_mode="sf_dr", lambda1=0.4, lambda2=0.2
            ),
            ELM,
            dr,
        ),
        (
            tdec.BeamConfig(
                beam_size=81, fusion_mode="sf_reduce_blank", lambda1=0.4,
                blank_reduction=reduction,
            ),
            ELM,
            None,
        ),
        (
            tdec.BeamConfig(
                beam_size=81, fusion_mode="sf_reduce_blank", lambda1=0.4,
                blank_reduction=expo,
            ),
            ELM,
            None,
        ),
    ]


def test_beam_matches_exhaustive_argmax_in_every_mode():
    for seed in (0, 1, 2):
        params, setups = exhaustive_setups(seed)
        feats = rand_features(seed + 100, t=3)
        for config, elm, ilm_est in setups:
            top = tdec.beam_search(params, feats, config, elm=elm, ilm=ilm_est)
            labels, _ = tdec.exhaustive_fused_argmax(
                params, feats, config, elm=elm, ilm=ilm_est
            )
            assert top.hyps[0].labels == labels, config.fusion_mode


def test_beam_exhaustive_full_context_lstm():
    params = micro_params(seed=9, context_size=None, pred_cell="lstm")
    feats = rand_features(9, t=3)
    config = tdec.BeamConfig(beam_size=81, fusion_mode="sf", lambda1=0.3)
    top = tdec.beam_search(params, feats, config, elm=ELM)
    labels, _ = tdec.exhaustive_fused_argmax(params, feats, config, elm=ELM)
    assert top.hyps[0].labels == labels


def test_zero_lambda1_reduces_to_fusion_none_bitwise():
    params = micro_params(seed=3)
    feats = rand_features(3, t=4)
    none = tdec.beam_search(
        params, feats,
        tdec.BeamConfig(beam_size=8, fusion_mode="none", n_best_out=4),
    )
    sf0 = tdec.beam_search(
        params, feats,
        tdec.BeamConfig(
            beam_size=8, fusion_mode="sf", lambda1=0.0, n_best_out=4
        ),
        elm=ELM,
    )
    assert [h.labels for h in none.hyps] == [h.labels for h in sf0.hyps]
    assert [h.trans_log_prob for h in none.hyps] == [
        h.trans_log_prob for h in sf0.hyps
    ]


def test_zero_lambda2_reduces_to_sf_bitwise():
    params = micro_params(seed=4)
    feats = rand_features(4, t=4)
    sf = tdec.beam_search(
        params, feats,
        tdec.BeamConfig(
            beam_size=8, fusion_mode="sf", lambda1=0.3, n_best_out=4
        ),
        elm=ELM,
    )
    sfilm0 = tdec.beam_search(
        params, feats,
        tdec.BeamConfig(
            beam_size=8, fusion_mode="sf_ilm", lambda1=0.3, lambda2=0.0,
            n_best_out=4,
        ),
        elm=ELM,
        ilm=tilm.zero_encoder_ilm(params),
    )
    assert [h.labels for h in sf.hyps] == [h.labels for h in sfilm0.hyps]
    assert [h.trans_log_prob for h in sf.hyps] == [
        h.trans_log_prob for h in sfilm0.hyps
    ]
    assert [h.lm_log_prob for h in sf.hyps] == [
        h.lm_log_prob for h in sfilm0.hyps
    ]


def test_nbest_caches_are_exact_rescores():
    params = micro_params(seed=5)
    feats = rand_features(5, t=4)
    out = tdec.beam_search(
        params, feats,
        tdec.BeamConfig(
            beam_size=8, fusion_mode="sf", lambda1=0.3, n_best_out=4
        ),
        elm=ELM,
    )
    for hyp in out.hyps:
        assert hyp.trans_log_prob == tlat.seq_log_prob(params, feats, hyp.labels)
        assert hyp.lm_log_prob == tlm.lm_log_prob(ELM, hyp.labels)


def test_ranking_order_invariant_under_exact_positive_scaling():
    params = micro_params(seed=6)
    feats = rand_features(6, t=4)
    config = tdec.BeamConfig(
        beam_size=8, fusion_mode="sf", lambda1=0.3, n_best_out=8
    )
    out = tdec.beam_search(params, feats, config, elm=ELM)
    scores = [
        h.trans_log_prob + config.lambda1 * h.lm_log_prob for h in out.hyps
    ]
    base = sorted(range(len(scores)), key=lambda i: (-scores[i],))
    for c in (0.5, 2.0, 8.0):  # powers of two scale exactly
        scaled = sorted(range(len(scores)), key=lambda i: (-c * scores[i],))
        assert scaled == base


def test_edit_distance_cases():
    assert tdec.edit_distance(("a", "b"), ("a", "b")) == 0
    assert tdec.edit_distance((), ("a", "b")) == 2
    assert tdec.edit_distance(("a", "b", "c"), ("a", "c")) == 1


@given(
    st.lists(st.sampled_from("ab"), max_size=6),
    st.lists(st.sampled_from("ab"), max_size=6),
)
def test_edit_distance_symmetry_and_bounds(x, y):
    d = tdec.edit_distance(tuple(x), tuple(y))
    assert d == tdec.edit_distance(tuple(y), tuple(x))
    assert abs(len(x) - len(y)) <= d <= max(len(x), len(y))


def test_wer_cases():
    assert tdec.wer([("a", "b")], [("a", "b")]) == 0.0
    assert tdec.wer([("a", "b")], [("a",)]) == 50.0
    refs = [("a", "b"), ("b",), ("a", "a", "b")]
    hyps = [("a",), ("b",), ("b", "b", "b")]
    want = 100.0 * (1 + 0 + 2) / (2 + 1 + 3)  # one del, exact, two subs
    assert abs(tdec.wer(refs, hyps) - want) < 1e-12


def test_wer_validation():
    with pytest.raises(ValueError):
        tdec.wer([("a",)], [])
    with pytest.raises(ValueError):
        tdec.wer([()], [("a",)])
