"""Alignment lattice: sequence log-probabilities, gradients, oracles.

For a target sequence of S labels and T input frames the lattice is the
(T + 1) x (S + 1) grid of nodes (t, s) = "t frames consumed, s labels
emitted".  Each node has at most two outgoing arcs: a blank arc to
(t + 1, s) and a label arc to (t + 1, s + 1) carrying target[s].  Every
path from (0, 0) to (T, S) has length exactly T, which is the strictly
monotonic topology: one symbol per frame, so S <= T or the probability
is zero.

The forward pass alpha(t, s) sums path mass into each node, the
backward pass beta(t, s) sums mass from each node to the final node,
and alpha(T, S) = beta(0, 0) = log P(target | features).  Gradients of
log P with respect to the per-node output logits follow from the arc
occupancy weights exp(alpha + arc + beta - log P), and from there flow
through the joint, prediction, and encoder networks.

The DP is checked against explicit enumeration of all label placements
(brute_force_seq_log_prob), which deliberately uses the scalar
joint/step code path rather than the vectorized grid.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from tslab import model as tmodel
from tslab.errors import OracleScaleError
from tslab.numerics import NEG_INF, log_softmax, log_sum_exp

ENUMERATION_GUARD = 10 ** 6


def _target_indices(vocab, target):
    vocab.check_sequence(target)
    return [vocab.index(lab) for lab in target]


def _grid_log_probs(params, h, target):
    """Per-node log output distributions for every (frame, prefix) pair."""
    contexts, pred_cache = tmodel.pred_rollout_forward(params, target)
    logq, joint_cache = tmodel.joint_grid_forward(params, h, contexts)
    return logq, pred_cache, joint_cache


def _dp_forward(logq, idx):
    """alpha table of shape (T + 1, S + 1); alpha[T, S] is log P."""
    t_len = logq.shape[0]
    s_len = len(idx)
    lpb = logq[:, :, 0]
    alpha = np.full((t_len + 1, s_len + 1), NEG_INF)
    alpha[0, 0] = 0.0
    for t in range(t_len):
        stay = alpha[t] + lpb[t]
        nxt = stay.copy()
        if s_len:
            lpl = logq[t, np.arange(s_len), idx]
            nxt[1:] = np.logaddexp(stay[1:], alpha[t, :-1] + lpl)
        alpha[t + 1] = nxt
    return alpha


def _dp_backward(logq, idx):
    """beta table of shape (T + 1, S + 1); beta[0, 0] is log P."""
    t_len = logq.shape[0]
    s_len = len(idx)
    lpb = logq[:, :, 0]
    beta = np.full((t_len + 1, s_len + 1), NEG_INF)
    beta[t_len, s_len] = 0.0
    for t in range(t_len - 1, -1, -1):
        stay = lpb[t] + beta[t + 1]
        prev = stay.copy()
        if s_len:
            lpl = logq[t, np.arange(s_len), idx]
            prev[:-1] = np.logaddexp(stay[:-1], lpl + beta[t + 1, 1:])
        beta[t] = prev
    return beta


def lattice_forward_backward(params, features, target):
    """(alpha, beta, logq) for inspection; alpha[T, S] = beta[0, 0] = log P."""
    target = tuple(target)
    h = tmodel.encode(params, features)
    if len(target) > h.shape[0]:
        raise ValueError(
            f"target length {len(target)} exceeds frame count {h.shape[0]}"
        )
    logq, _, _ = _grid_log_probs(params, h, target)
    idx = _target_indices(params.config.vocab, target)
    return _dp_forward(logq, idx), _dp_backward(logq, idx), logq


def seq_log_prob_given_encoding(params, h, target):
    target = tuple(target)
    if len(target) > h.shape[0]:
        return NEG_INF
    logq, _, _ = _grid_log_probs(params, h, target)
    idx = _target_indices(params.config.vocab, target)
    alpha = _dp_forward(logq, idx)
    return float(alpha[-1, -1])


def seq_log_prob(params, features, target):
    """log P(target | features) summed over all alignments.

    Returns exact -inf when S > T; that is the only way this function
    produces -inf, since every step distribution is a softmax and
    therefore strictly positive.
    """
    h = tmodel.encode(params, features)
    return seq_log_prob_given_encoding(params, h, target)


def _occupancy_dlogits(logq, idx, alpha, beta, logp):
    """dlogP/dlogits over the grid, shape (T, S + 1, V + 1)."""
    t_len = logq.shape[0]
    s_len = len(idx)
    q = np.exp(logq)
    lpb = logq[:, :, 0]
    gamma_b = np.exp(alpha[:-1] + lpb + beta[1:] - logp)
    occ_total = gamma_b.copy()
    dlogits = np.zeros_like(logq)
    dlogits[:, :, 0] += gamma_b
    if s_len:
        s_range = np.arange(s_len)
        lpl = logq[:, s_range, idx]
        gamma_l = np.exp(alpha[:-1, :-1] + lpl + beta[1:, 1:] - logp)
        occ_total[:, :-1] += gamma_l
        for s in range(s_len):
            dlogits[:, s, idx[s]] += gamma_l[:, s]
    dlogits -= occ_total[:, :, None] * q
    return dlogits


def seq_log_prob_with_grad_given_encoding(params, h, enc_cache, target):
    """(log P, gradient dict of dlogP/dtheta) sharing an encoder forward."""
    target = tuple(target)
    t_len = h.shape[0]
    if len(target) > t_len:
        raise ValueError(
            f"target length {len(target)} exceeds frame count {t_len}; "
            "no alignment exists"
        )
    logq, pred_cache, joint_cache = _grid_log_probs(params, h, target)
    idx = _target_indices(params.config.vocab, target)
    alpha = _dp_forward(logq, idx)
    beta = _dp_backward(logq, idx)
    logp = float(alpha[-1, -1])
    if not np.isfinite(logp):
        raise ValueError("sequence log-probability is not finite; cannot differentiate")
    dlogits = _occupancy_dlogits(logq, idx, alpha, beta, logp)
    grads, dh, dc = tmodel.joint_grid_backward(params, joint_cache, dlogits)
    grads.update(tmodel.pred_rollout_backward(params, pred_cache, dc))
    grads.update(tmodel.encode_backward(params, enc_cache, dh))
    return logp, grads


def seq_log_prob_with_grad(params, features, target):
    h, enc_cache = tmodel.encode_forward(params, features)
    return seq_log_prob_with_grad_given_encoding(params, h, enc_cache, target)


def brute_force_seq_log_prob(params, features, target):
    """Enumeration oracle for seq_log_prob.

    Sums over every placement of the S labels among the T frames,
    scoring each alignment step with the scalar joint code path.  The
    enumeration is refused above C(T, S) * T = 10^6 summed step
    evaluations.
    """
    target = tuple(target)
    h = tmodel.encode(params, features)
    t_len = h.shape[0]
    s_len = len(target)
    if s_len > t_len:
        return NEG_INF
    if math.comb(t_len, s_len) * t_len > ENUMERATION_GUARD:
        raise OracleScaleError(
            f"alignment enumeration for T={t_len}, S={s_len} exceeds the "
            f"{ENUMERATION_GUARD} step guard"
        )
    params.config.vocab.check_sequence(target)
    step_logs = np.empty((t_len, s_len + 1, params.config.vocab.num_outputs))
    for s in range(s_len + 1):
        context = tmodel.predict_context(params, target[:s])
        for t in range(t_len):
            step_logs[t, s] = log_softmax(tmodel.joint_logits(params, h[t], context))
    idx = _target_indices(params.config.vocab, target)
    totals = []
    for positions in itertools.combinations(range(t_len), s_len):
        s = 0
        total = 0.0
        pos = set(positions)
        for t in range(t_len):
            if t in pos:
                total += step_logs[t, s, idx[s]]
                s += 1
            else:
                total += step_logs[t, s, 0]
        totals.append(total)
    return log_sum_exp(totals)


def posterior_table(params, features, max_len):
    """log P(sequence | features) for every sequence up to min(max_len, T).

    Values are natural-log probabilities; summed in the linear domain
    they cover the full output distribution (exactly 1 when max_len >=
    T, since no longer sequence has positive probability).  Guarded by
    (|vocabulary| + 1) ** T <= 10^6.
    """
    cfg = params.config
    h = tmodel.encode(params, features)
    t_len = h.shape[0]
    if cfg.vocab.num_outputs ** t_len > ENUMERATION_GUARD:
        raise OracleScaleError(
            f"posterior table for |V|={cfg.vocab.size}, T={t_len} exceeds the "
            f"{ENUMERATION_GUARD} enumeration guard"
        )
    if max_len < 0:
        raise ValueError("max_len must be non-negative")
    table = {}
    for seq in tmodel.enumerate_label_sequences(cfg.vocab, min(max_len, t_len)):
        table[seq] = seq_log_prob_given_encoding(params, h, seq)
    return table


@dataclass
class LossAndGrad:
    """Scalar loss with its flat-parameter gradient."""

    loss: float
    grad: np.ndarray
    per_utterance: list


def ce_loss_and_grad(params, batch):
    """Mean negative log-probability over (features, target) pairs.

    Gradients are accumulated strictly in batch order.  A pair with
    S > T has no alignment and raises a ValueError naming the pair.
    """
    if len(batch) == 0:
        raise ValueError("cross-entropy batch must not be empty")
    cfg = params.config
    total = tmodel.zero_grads(cfg)
    losses = []
    scale = -1.0 / len(batch)
    for i, (features, target) in enumerate(batch):
        feats = np.asarray(features, dtype=np.float64)
        if len(target) > feats.shape[0]:
            raise ValueError(
                f"training pair {i}: target length {len(target)} exceeds "
                f"frame count {feats.shape[0]}"
            )
        logp, grads = seq_log_prob_with_grad(params, feats, tuple(target))
        losses.append(-logp)
        tmodel.add_grads(total, grads, scale=scale)
    loss = sum(losses) / len(batch)
    return LossAndGrad(
        loss=loss, grad=tmodel.grads_to_flat(cfg, total), per_utterance=losses
    )


def mean_blank_probability(params, batch):
    """Mean per-step blank probability over reference lattices.

    Averages the blank mass of the step distribution uniformly over all
    (frame, prefix) nodes of each utterance's target lattice, then over
    utterances.  Used to observe blank suppression under sequence
    discriminative training.
    """
    if len(batch) == 0:
        raise ValueError("batch must not be empty")
    means = []
    for features, target in batch:
        h = tmodel.encode(params, features)
        logq, _, _ = _grid_log_probs(params, h, tuple(target))
        means.append(float(np.exp(logq[:, :, 0]).mean()))
    return sum(means) / len(means)
