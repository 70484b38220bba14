"""Shared builders for micro models and synthetic inputs."""

import dataclasses

import numpy as np

from tslab import model as tmodel
from tslab import pipeline as tpipe

VOCAB2 = tmodel.Vocabulary(labels=("a", "b"))
VOCAB3 = tmodel.Vocabulary(labels=("a", "b", "c"))


def micro_config(vocab=VOCAB2, input_dim=3, encoder_dim=4, pred_dim=4,
                 joint_dim=4, context_size=1, pred_cell="elman",
                 encoder_window=1):
    return tmodel.ModelConfig(
        vocab=vocab, input_dim=input_dim, encoder_dim=encoder_dim,
        encoder_window=encoder_window, pred_dim=pred_dim,
        joint_dim=joint_dim, context_size=context_size, pred_cell=pred_cell,
    )


def micro_params(seed=0, scale=None, **config_kwargs):
    """Seeded micro model; scale redraws weights uniform [-scale, scale].

    The training-time init range is too small for finite-difference
    comparisons: the analytic gradients shrink to the point where
    central-difference cancellation dominates the relative error.
    """
    config = micro_config(**config_kwargs)
    params = tmodel.init_params(config, seed)
    if scale is not None:
        rng = np.random.default_rng(seed + 1000)
        params = params.with_flat(
            rng.uniform(-scale, scale, size=params.size)
        )
    return params


def rand_features(seed, t, input_dim=3):
    rng = np.random.default_rng(seed + 5000)
    return rng.normal(size=(t, input_dim))


def micro_experiment(**overrides):
    """Pipeline config small enough for sub-second end-to-end runs."""
    values = dict(
        vocab_size=3, prior_order=1, frames_per_label_max=1, feature_dim=3,
        noise_sigma=0.3, train_utts=16, dev_utts=6, lm_sequences=40,
        min_len=1, max_len=3, encoder_dim=5, encoder_window=1, pred_dim=5,
        joint_dim=5, context_size="1", pred_cell="elman", elm_kind="ngram",
        elm_steps=10, ce_steps=30, ce_step_size=0.2, batch_size=8,
        nbest_n=2, nbest_beam_size=4, ft_steps=5, ft_step_size=0.05,
        beam_size=4, lambda1_grid="0.0,0.3", lambda2_grid="0.0,0.3",
        reduce_rho_grid="0.5", reduce_gamma_grid="2.0",
    )
    values.update(overrides)
    return tpipe.ExperimentConfig(**values)


def replace(cfg, **overrides):
    return dataclasses.replace(cfg, **overrides)
