"""Sequence discriminative training objectives.

All objectives score hypotheses with the scaled product of the
transducer and an external LM,

    p_seq(a | X) = P_trans(a | X)^alpha * P_lm(a)^beta / Z(X),

normalized over a hypothesis space: the full enumerable space of label
sequences (exact variants), an N-best list with the reference appended
when missing, or the lattice-free last-label state graph.  The MMI loss
is the expected negative log of p_seq under the empirical distribution;
the MBR loss is the expected risk of hypotheses under p_seq.

Minimizing the exact MMI loss drives the model posterior toward

    P(a | X)  proportional to  (Pr(a | X) / P_lm(a)^beta)^(1/alpha)

over the support of the empirical distribution (mmi_optimum_target);
with beta > 0 and an LM flatter than the empirical distribution this
boosts label probabilities and suppresses blank.  The exact MBR optimum
concentrates all mass on the sequence of minimum expected risk
(bayes_optimal_sequence).  Both facts are exercised by training a free
table model (softmax over one logit per sequence, no transducer) with
the same losses.

Transducer gradients are exact: each hypothesis contributes its lattice
gradient weighted by (p_seq - empirical) for MMI or by
p_seq * (risk - expected risk) for MBR.  LM parameters are always
frozen.  Cached N-best LM scores are trusted; transducer scores are
recomputed live so that gradients flow.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from tslab import lattice as tlattice
from tslab import lm as tlm
from tslab import model as tmodel
from tslab.errors import OracleScaleError
from tslab.lattice import LossAndGrad
from tslab.numerics import NEG_INF, log_sum_exp

SPACE_GUARD = 10 ** 5
WEIGHT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class SeqScales:
    """Transducer and LM exponents of the sequence posterior."""

    alpha: float = 1.0
    beta: float = 0.3

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")


def _check_distribution(weights, what):
    w = np.asarray(weights, dtype=np.float64)
    if (w < 0).any():
        raise ValueError(f"{what} weights must be non-negative")
    if abs(w.sum() - 1.0) > WEIGHT_TOLERANCE:
        raise ValueError(f"{what} weights must sum to 1 (got {w.sum()!r})")


@dataclass(frozen=True)
class WeightedUtterance:
    """One utterance of an empirical distribution.

    ``features`` may be None for table-model runs where no transducer
    is evaluated; ``targets`` maps label sequences to conditional
    probabilities summing to 1.
    """

    utt_id: str
    features: object
    weight: float
    targets: dict


@dataclass
class EmpiricalDistribution:
    utterances: list

    def __post_init__(self):
        if not self.utterances:
            raise ValueError("empirical distribution must not be empty")
        ids = [u.utt_id for u in self.utterances]
        if len(set(ids)) != len(ids):
            raise ValueError("utterance identifiers must be unique")
        _check_distribution([u.weight for u in self.utterances], "utterance")
        for u in self.utterances:
            if not u.targets:
                raise ValueError(f"utterance {u.utt_id} has no target sequences")
            _check_distribution(list(u.targets.values()), f"target ({u.utt_id})")


def _scaled_scores(trans_logps, lm_logps, scales):
    """alpha * trans + beta * lm without 0 * -inf pitfalls."""
    out = np.empty(len(trans_logps))
    for i, (t, l) in enumerate(zip(trans_logps, lm_logps)):
        s = scales.alpha * t
        if scales.beta != 0.0:
            s += scales.beta * l
        out[i] = s
    return out


def _posterior(scores):
    finite = [s for s in scores if s != NEG_INF]
    if not finite:
        raise ValueError("degenerate hypothesis space: every score is zero mass")
    logz = log_sum_exp(scores)
    return np.exp(np.asarray(scores) - logz), logz


def p_seq(params, lm, scales, space, features):
    """Sequence posterior over ``space`` for one utterance (linear domain)."""
    space = [tuple(a) for a in space]
    if len(set(space)) != len(space):
        raise ValueError("hypothesis space contains duplicate sequences")
    h = tmodel.encode(params, features)
    trans = [tlattice.seq_log_prob_given_encoding(params, h, a) for a in space]
    lms = [tlm.lm_log_prob(lm, a) if scales.beta != 0.0 else 0.0 for a in space]
    probs, _ = _posterior(_scaled_scores(trans, lms, scales))
    return probs


def enumeration_space(vocab, max_len):
    """Full hypothesis space of sequences up to max_len, guarded."""
    size = sum(vocab.size ** s for s in range(max_len + 1))
    if size > SPACE_GUARD:
        raise OracleScaleError(
            f"hypothesis space of {size} sequences exceeds the {SPACE_GUARD} guard"
        )
    return tmodel.enumerate_label_sequences(vocab, max_len)


def _space_grads(params, features, space):
    """Live transducer scores and gradients over a hypothesis space.

    Sequences longer than the frame count get zero mass and no
    gradient.  Returns (trans_logps, grads list with None placeholders,
    encoder frame count).
    """
    h, enc_cache = tmodel.encode_forward(params, features)
    t_len = h.shape[0]
    logps, grads = [], []
    for a in space:
        if len(a) > t_len:
            logps.append(NEG_INF)
            grads.append(None)
            continue
        lp, g = tlattice.seq_log_prob_with_grad_given_encoding(
            params, h, enc_cache, a
        )
        logps.append(lp)
        grads.append(g)
    return logps, grads


def mmi_loss_exact(params, lm, scales, empirical, max_len):
    """Exact MMI over the full enumerable space of sequences <= max_len."""
    cfg = params.config
    space = enumeration_space(cfg.vocab, max_len)
    space_index = {a: i for i, a in enumerate(space)}
    lm_cache = {}

    def lm_score(a):
        if a not in lm_cache:
            lm_cache[a] = tlm.lm_log_prob(lm, a) if scales.beta != 0.0 else 0.0
        return lm_cache[a]

    total = tmodel.zero_grads(cfg)
    loss = 0.0
    per_utt = []
    for utt in empirical.utterances:
        if utt.features is None:
            raise ValueError(f"utterance {utt.utt_id} carries no features")
        for a in utt.targets:
            if a not in space_index:
                raise ValueError(
                    f"target {a!r} of {utt.utt_id} lies outside the hypothesis space"
                )
        trans, grads = _space_grads(params, utt.features, space)
        scores = _scaled_scores(trans, [lm_score(a) for a in space], scales)
        pseq, logz = _posterior(scores)
        utt_loss = logz
        for a, w in utt.targets.items():
            if w == 0.0:
                continue
            idx = space_index[a]
            if scores[idx] == NEG_INF:
                raise ValueError(
                    f"target {a!r} of {utt.utt_id} has zero sequence-posterior mass"
                )
            utt_loss -= w * scores[idx]
        loss += utt.weight * utt_loss
        per_utt.append(utt_loss)
        for i, a in enumerate(space):
            w = utt.targets.get(a, 0.0)
            coeff = utt.weight * scales.alpha * (pseq[i] - w)
            if coeff != 0.0 and grads[i] is not None:
                tmodel.add_grads(total, grads[i], scale=coeff)
    return LossAndGrad(
        loss=loss, grad=tmodel.grads_to_flat(cfg, total), per_utterance=per_utt
    )


def mbr_loss_exact(params, lm, scales, empirical, max_len, risk):
    """Exact MBR over the full enumerable space of sequences <= max_len."""
    cfg = params.config
    space = enumeration_space(cfg.vocab, max_len)
    lm_cache = {}

    def lm_score(a):
        if a not in lm_cache:
            lm_cache[a] = tlm.lm_log_prob(lm, a) if scales.beta != 0.0 else 0.0
        return lm_cache[a]

    total = tmodel.zero_grads(cfg)
    loss = 0.0
    per_utt = []
    for utt in empirical.utterances:
        if utt.features is None:
            raise ValueError(f"utterance {utt.utt_id} carries no features")
        trans, grads = _space_grads(params, utt.features, space)
        scores = _scaled_scores(trans, [lm_score(a) for a in space], scales)
        pseq, _ = _posterior(scores)
        risks = np.array(
            [expected_risk(a, utt.targets, risk) for a in space]
        )
        utt_loss = float((pseq * risks).sum())
        loss += utt.weight * utt_loss
        per_utt.append(utt_loss)
        for i in range(len(space)):
            coeff = (
                utt.weight * scales.alpha * pseq[i] * (risks[i] - utt_loss)
            )
            if coeff != 0.0 and grads[i] is not None:
                tmodel.add_grads(total, grads[i], scale=coeff)
    return LossAndGrad(
        loss=loss, grad=tmodel.grads_to_flat(cfg, total), per_utterance=per_utt
    )


def exact_denominator(params, lm, scales, features, max_len):
    """log sum over the full space of the scaled transducer-LM product."""
    space = enumeration_space(params.config.vocab, max_len)
    h = tmodel.encode(params, features)
    trans = [tlattice.seq_log_prob_given_encoding(params, h, a) for a in space]
    lms = [tlm.lm_log_prob(lm, a) if scales.beta != 0.0 else 0.0 for a in space]
    return log_sum_exp(_scaled_scores(trans, lms, scales))


# ---------------------------------------------------------------------------
# N-best spaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NBestHyp:
    labels: tuple
    trans_log_prob: float
    lm_log_prob: float


@dataclass
class NBestList:
    """Decoder hypotheses with cached scores.

    ``reference_appended`` records that the reference was added after
    generation rather than found by the decoder.
    """

    hyps: list
    reference_appended: bool = False

    def __post_init__(self):
        labels = [h.labels for h in self.hyps]
        if len(set(labels)) != len(labels):
            raise ValueError("N-best hypotheses must be unique")

    def labels(self):
        return [h.labels for h in self.hyps]


def ensure_reference(nbest, reference, lm):
    """The N-best list with the reference present, flagged if appended.

    The appended hypothesis caches only the LM score (computed live);
    its transducer score is recomputed by the losses anyway and is
    stored as NaN to make accidental use obvious.
    """
    reference = tuple(reference)
    if any(h.labels == reference for h in nbest.hyps):
        return nbest
    ref_hyp = NBestHyp(
        labels=reference,
        trans_log_prob=float("nan"),
        lm_log_prob=tlm.lm_log_prob(lm, reference),
    )
    return NBestList(hyps=list(nbest.hyps) + [ref_hyp], reference_appended=True)


def _nbest_posterior(params, lm, scales, features, nbest):
    """(space, trans grads, posterior, scores) for an N-best space."""
    space = [h.labels for h in nbest.hyps]
    trans, grads = _space_grads(params, features, space)
    for a, g in zip(space, grads):
        if g is None:
            raise ValueError(
                f"hypothesis {a!r} is longer than the utterance; no alignment"
            )
    lms = [h.lm_log_prob if scales.beta != 0.0 else 0.0 for h in nbest.hyps]
    scores = _scaled_scores(trans, lms, scales)
    pseq, logz = _posterior(scores)
    return space, grads, pseq, scores, logz


def mmi_loss_nbest(params, lm, scales, features, nbest, reference):
    """MMI over an N-best space: negative log sequence posterior of the
    reference."""
    reference = tuple(reference)
    nbest = ensure_reference(nbest, reference, lm)
    space, grads, pseq, scores, logz = _nbest_posterior(
        params, lm, scales, features, nbest
    )
    ref_idx = space.index(reference)
    loss = logz - scores[ref_idx]
    cfg = params.config
    total = tmodel.zero_grads(cfg)
    for i in range(len(space)):
        coeff = scales.alpha * (pseq[i] - (1.0 if i == ref_idx else 0.0))
        tmodel.add_grads(total, grads[i], scale=coeff)
    return LossAndGrad(
        loss=float(loss), grad=tmodel.grads_to_flat(cfg, total), per_utterance=[loss]
    )


def mbr_loss_nbest(params, lm, scales, features, nbest, reference, risk):
    """Expected risk of the N-best space under the sequence posterior."""
    reference = tuple(reference)
    nbest = ensure_reference(nbest, reference, lm)
    space, grads, pseq, _, _ = _nbest_posterior(params, lm, scales, features, nbest)
    risks = np.array([float(risk(a, reference)) for a in space])
    loss = float((pseq * risks).sum())
    cfg = params.config
    total = tmodel.zero_grads(cfg)
    for i in range(len(space)):
        coeff = scales.alpha * pseq[i] * (risks[i] - loss)
        tmodel.add_grads(total, grads[i], scale=coeff)
    return LossAndGrad(
        loss=loss, grad=tmodel.grads_to_flat(cfg, total), per_utterance=[loss]
    )


# ---------------------------------------------------------------------------
# N-best file format
# ---------------------------------------------------------------------------

def write_nbest_file(path, entries):
    """entries: list of (utterance id, NBestList).  Floats are written
    with repr so they reload bitwise."""
    with open(path, "w", encoding="utf-8") as fh:
        for utt_id, nbest in entries:
            fh.write(f"UTT {utt_id} {len(nbest.hyps)}\n")
            for h in nbest.hyps:
                fh.write(
                    repr(h.trans_log_prob)
                    + "\t"
                    + repr(h.lm_log_prob)
                    + "\t"
                    + " ".join(h.labels)
                    + "\n"
                )


def read_nbest_file(path):
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    pos = 0
    while pos < len(lines):
        header = lines[pos].split()
        if len(header) != 3 or header[0] != "UTT":
            raise ValueError(f"malformed N-best header at line {pos + 1}")
        utt_id, count = header[1], int(header[2])
        pos += 1
        hyps = []
        for _ in range(count):
            trans_s, lm_s, labels_s = lines[pos].split("\t")
            hyps.append(
                NBestHyp(
                    labels=tuple(labels_s.split()),
                    trans_log_prob=float(trans_s),
                    lm_log_prob=float(lm_s),
                )
            )
            pos += 1
        entries.append((utt_id, NBestList(hyps=hyps)))
    return entries


# ---------------------------------------------------------------------------
# Lattice-free MMI
# ---------------------------------------------------------------------------

@dataclass
class LfMmiResult:
    loss: float
    grad: np.ndarray
    log_denominator: float
    ref_log_prob: float


def _lf_lm_matrices(lm, vocab, scales):
    """beta-scaled bigram factors per (last-label state, next symbol)."""
    n_states = vocab.size + 1  # state 0: nothing emitted; state i: label i-1
    lab_mat = np.zeros((n_states, vocab.size))
    eos_vec = np.zeros(n_states)
    if scales.beta == 0.0:
        return lab_mat, eos_vec
    for q in range(n_states):
        history = () if q == 0 else (vocab.labels[q - 1],)
        for j, lab in enumerate(vocab.labels):
            lab_mat[q, j] = scales.beta * lm.label_log_prob(history, lab)
        eos_vec[q] = scales.beta * lm.eos_log_prob(history)
    return lab_mat, eos_vec


def lf_mmi_loss(params, lm, scales, features, reference, top_k=20):
    """Lattice-free MMI: exact numerator, pruned last-label denominator.

    The denominator graph keeps one state per (frame, last emitted
    label); after each frame only the ``top_k`` best states survive
    (ties broken by state order: no-label first, then label order).
    Requires a context-1 transducer and an LM of order <= 2, the
    conditions under which the last-label state merge is exact.  With
    alpha = 1 and no pruning the denominator equals the full-space sum
    over all sequences up to length T.
    """
    cfg = params.config
    if cfg.full_context:
        raise ValueError(
            "lattice-free MMI requires a context-1 prediction network"
        )
    if not isinstance(lm, tlm.NGramLM) or lm.order > 2:
        raise ValueError("lattice-free MMI requires a count LM of order <= 2")
    if top_k is not None and top_k < 1:
        raise ValueError("top_k must be at least 1 (or None for unpruned)")
    reference = tuple(reference)
    vocab = cfg.vocab
    n_states = vocab.size + 1

    h, enc_cache = tmodel.encode_forward(params, features)
    t_len = h.shape[0]
    if len(reference) > t_len:
        raise ValueError(
            f"reference length {len(reference)} exceeds frame count {t_len}"
        )
    # State q's prediction context: row q of the rollout over all labels
    # (row 0 is the empty history, row i the history ending in label i-1).
    contexts, pred_cache = tmodel.pred_rollout_forward(params, vocab.labels)
    logq, joint_cache = tmodel.joint_grid_forward(params, h, contexts)
    lab_mat, eos_vec = _lf_lm_matrices(lm, vocab, scales)

    keep = top_k if top_k is not None else n_states
    fwd = np.full(n_states, NEG_INF)
    fwd[0] = 0.0
    fwd_hist = [fwd.copy()]
    for t in range(t_len):
        stay = fwd + scales.alpha * logq[t, :, 0]
        # label arcs: contrib[q, j] -> state j + 1
        contrib = fwd[:, None] + scales.alpha * logq[t, :, 1:] + lab_mat
        new = np.full(n_states, NEG_INF)
        new[0] = stay[0]
        for j in range(vocab.size):
            col = contrib[:, j]
            m = col.max()
            lab_mass = m + np.log(np.exp(col - m).sum()) if m != NEG_INF else NEG_INF
            new[j + 1] = np.logaddexp(stay[j + 1], lab_mass)
        if keep < n_states:
            order = sorted(range(n_states), key=lambda q: (-new[q], q))
            for q in order[keep:]:
                new[q] = NEG_INF
        fwd = new
        fwd_hist.append(fwd.copy())
    finals = fwd + eos_vec
    log_denom = log_sum_exp(finals)

    # Backward over the retained graph; pruned states have fwd = -inf and
    # produce zero occupancy automatically.
    bwd = eos_vec.copy()
    bwd[fwd == NEG_INF] = NEG_INF
    dlogits = np.zeros_like(logq)
    for t in range(t_len - 1, -1, -1):
        fwd_t = fwd_hist[t]
        gamma_b = np.exp(fwd_t + scales.alpha * logq[t, :, 0] + bwd - log_denom)
        arc_lab = (
            fwd_t[:, None]
            + scales.alpha * logq[t, :, 1:]
            + lab_mat
            + bwd[None, 1:]
        )
        gamma_l = np.exp(arc_lab - log_denom)
        gamma_total = gamma_b + gamma_l.sum(axis=1)
        node = np.zeros((n_states, vocab.size + 1))
        node[:, 0] = gamma_b
        node[:, 1:] = gamma_l
        q_probs = np.exp(logq[t])
        dlogits[t] = scales.alpha * (node - gamma_total[:, None] * q_probs)
        new_bwd = np.full(n_states, NEG_INF)
        for q in range(n_states):
            if fwd_t[q] == NEG_INF:
                continue
            terms = [scales.alpha * logq[t, q, 0] + bwd[q]]
            terms.extend(
                scales.alpha * logq[t, q, j + 1] + lab_mat[q, j] + bwd[j + 1]
                for j in range(vocab.size)
            )
            new_bwd[q] = log_sum_exp(terms)
        bwd = new_bwd

    joint_grads, dh, dc = tmodel.joint_grid_backward(params, joint_cache, dlogits)
    denom_grads = tmodel.zero_grads(cfg)
    tmodel.add_grads(denom_grads, joint_grads)
    tmodel.add_grads(
        denom_grads, tmodel.pred_rollout_backward(params, pred_cache, dc)
    )
    tmodel.add_grads(denom_grads, tmodel.encode_backward(params, enc_cache, dh))

    ref_logp, ref_grads = tlattice.seq_log_prob_with_grad_given_encoding(
        params, h, enc_cache, reference
    )
    ref_lm = tlm.lm_log_prob(lm, reference) if scales.beta != 0.0 else 0.0
    loss = log_denom - scales.alpha * ref_logp - scales.beta * ref_lm

    total = tmodel.zero_grads(cfg)
    tmodel.add_grads(total, denom_grads)
    tmodel.add_grads(total, ref_grads, scale=-scales.alpha)
    return LfMmiResult(
        loss=float(loss),
        grad=tmodel.grads_to_flat(cfg, total),
        log_denominator=float(log_denom),
        ref_log_prob=float(ref_logp),
    )


# ---------------------------------------------------------------------------
# Closed-form optima
# ---------------------------------------------------------------------------

def mmi_optimum_target(targets, lm, scales):
    """Global-optimum model posterior of exact MMI over the support.

    target(a) is proportional to (Pr(a) / P_lm(a)^beta)^(1/alpha),
    normalized over the support of the empirical conditional Pr.
    """
    support = [(a, w) for a, w in targets.items() if w > 0.0]
    if not support:
        raise ValueError("empirical distribution has empty support")
    _check_distribution([w for _, w in targets.items()], "target")
    logs = []
    for a, w in support:
        lm_lp = tlm.lm_log_prob(lm, a) if scales.beta != 0.0 else 0.0
        if lm_lp == NEG_INF:
            raise ValueError(
                f"LM assigns zero probability to supported sequence {a!r}"
            )
        logs.append((math.log(w) - scales.beta * lm_lp) / scales.alpha)
    logz = log_sum_exp(logs)
    return {a: math.exp(lp - logz) for (a, _), lp in zip(support, logs)}


def expected_risk(candidate, targets, risk):
    return sum(w * float(risk(candidate, a)) for a, w in targets.items())


def bayes_optimal_sequence(targets, risk, candidates):
    """Candidate minimizing expected risk; ties prefer shorter, then
    lexicographically smaller sequences."""
    candidates = [tuple(c) for c in candidates]
    if not candidates:
        raise ValueError("candidate space must not be empty")
    best = min(
        candidates, key=lambda c: (expected_risk(c, targets, risk), len(c), c)
    )
    return best


def total_variation(p, q):
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


# ---------------------------------------------------------------------------
# Free table model (softmax over one logit per sequence; no transducer)
# ---------------------------------------------------------------------------

@dataclass
class TableModel:
    """Per-utterance free logits over a shared hypothesis space."""

    space: list
    logits: dict

    @classmethod
    def zeros(cls, space, utt_ids):
        space = [tuple(a) for a in space]
        return cls(
            space=space,
            logits={u: np.zeros(len(space)) for u in utt_ids},
        )

    def log_probs(self, utt_id):
        logits = self.logits[utt_id]
        shifted = logits - logits.max()
        return shifted - np.log(np.exp(shifted).sum())

    def posterior(self, utt_id):
        return dict(zip(self.space, np.exp(self.log_probs(utt_id))))


def _table_scores(table, lm, scales, utt_id, lm_logps):
    logp = table.log_probs(utt_id)
    scores = scales.alpha * logp
    if scales.beta != 0.0:
        scores = scores + scales.beta * lm_logps
    return logp, scores


def _lm_vector(table, lm, scales):
    if scales.beta == 0.0:
        return np.zeros(len(table.space))
    return np.array([tlm.lm_log_prob(lm, a) for a in table.space])


def table_mmi_loss_and_grad(table, lm, scales, empirical):
    """Exact MMI for the table model.  Gradient per utterance is
    alpha * (p_seq - Pr), scaled by the utterance weight."""
    lm_logps = _lm_vector(table, lm, scales)
    index = {a: i for i, a in enumerate(table.space)}
    loss = 0.0
    grads = {}
    for utt in empirical.utterances:
        _, scores = _table_scores(table, lm, scales, utt.utt_id, lm_logps)
        pseq, logz = _posterior(scores)
        w = np.zeros(len(table.space))
        for a, wa in utt.targets.items():
            if a not in index:
                raise ValueError(
                    f"target {a!r} of {utt.utt_id} lies outside the table space"
                )
            w[index[a]] = wa
        loss += utt.weight * float(logz - (w * scores).sum())
        grads[utt.utt_id] = utt.weight * scales.alpha * (pseq - w)
    return loss, grads


def table_mbr_loss_and_grad(table, lm, scales, empirical, risk):
    """Exact MBR for the table model.  Gradient per utterance is
    alpha * p_seq * (risk - expected risk)."""
    lm_logps = _lm_vector(table, lm, scales)
    loss = 0.0
    grads = {}
    for utt in empirical.utterances:
        _, scores = _table_scores(table, lm, scales, utt.utt_id, lm_logps)
        pseq, _ = _posterior(scores)
        risks = np.array(
            [expected_risk(a, utt.targets, risk) for a in table.space]
        )
        utt_loss = float((pseq * risks).sum())
        loss += utt.weight * utt_loss
        grads[utt.utt_id] = (
            utt.weight * scales.alpha * pseq * (risks - utt_loss)
        )
    return loss, grads


def train_table_model(table, lm, scales, empirical, objective, steps,
                      step_size, risk=None):
    """Plain gradient descent on a table model; returns loss history.

    objective is 'mmi' or 'mbr' (the latter needs ``risk``).
    """
    if objective not in ("mmi", "mbr"):
        raise ValueError("objective must be 'mmi' or 'mbr'")
    if objective == "mbr" and risk is None:
        raise ValueError("the MBR objective needs a risk function")
    losses = []
    for _ in range(steps):
        if objective == "mmi":
            loss, grads = table_mmi_loss_and_grad(table, lm, scales, empirical)
        else:
            loss, grads = table_mbr_loss_and_grad(
                table, lm, scales, empirical, risk
            )
        if not np.isfinite(loss):
            raise ValueError("table-model training diverged (non-finite loss)")
        losses.append(loss)
        for utt_id, g in grads.items():
            table.logits[utt_id] = table.logits[utt_id] - step_size * g
    return losses
