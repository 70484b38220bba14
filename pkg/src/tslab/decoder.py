"""Time-synchronous beam decoding with language-model fusion.

Fusion modes combine three log-score components per hypothesis:

    combined = transducer + lambda1 * ELM - lambda2 * ILM

where the transducer component is the alignment mass accumulated over
frames (hypotheses with identical label sequences are merged by
log-sum-exp, so with a large enough beam it equals the exact sequence
log probability), the external LM contributes one increment per emitted
label plus an end-of-sequence term at finalization, and the internal LM
(always renormalized, no end-of-sequence mass) contributes one
increment per emitted label.  Modes:

    none             transducer only
    sf               shallow fusion with the external LM
    sf_ilm           shallow fusion plus internal-LM subtraction
    sf_dr            as sf_ilm but requires a density-ratio estimate
    sf_reduce_blank  shallow fusion on blank-reduced step posteriors

Zero lambda weights contribute exactly nothing (the scorer is not even
evaluated), so sf with lambda1 = 0 reproduces mode none bitwise and
sf_ilm with lambda2 = 0 reproduces sf bitwise.

The returned N-best entries cache exact quantities, not beam-internal
scores: the transducer score is the full lattice marginal and the LM
score includes the end-of-sequence term.  Both regenerate bitwise from
the checkpoint and are what sequence training consumes.

exhaustive_fused_argmax is the brute-force oracle: it enumerates all
(|V|+1)^T alignment paths, collapses them, and applies the same fusion
arithmetic, which checks the beam search end to end including blank
reduction.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from tslab import lattice as tlattice
from tslab import lm as tlm
from tslab import model as tmodel
from tslab.errors import OracleScaleError
from tslab.numerics import NEG_INF, log_sum_exp
from tslab.seqtrain import NBestHyp, NBestList

PATH_GUARD = 10 ** 6
FUSION_MODES = ("none", "sf", "sf_ilm", "sf_dr", "sf_reduce_blank")
ILM_MODES = ("sf_ilm", "sf_dr")


@dataclass(frozen=True)
class BlankReduction:
    """Blank-probability reduction applied to a step posterior.

    linear scales the blank mass by rho; exponential raises it to the
    power gamma; both renormalize the full distribution afterwards.
    """

    mode: str = "off"
    rho: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.mode not in ("off", "linear", "exponential"):
            raise ValueError(f"unknown blank reduction mode {self.mode!r}")
        if self.mode == "linear" and not 0.0 <= self.rho <= 1.0:
            raise ValueError("linear blank reduction needs rho in [0, 1]")
        if self.mode == "exponential" and self.gamma < 1.0:
            raise ValueError("exponential blank reduction needs gamma >= 1")

    @property
    def active(self):
        return self.mode != "off"


def reduce_blank(step_dist, reduction):
    """Reduced and renormalized copy of a step posterior (blank first)."""
    dist = np.asarray(step_dist, dtype=np.float64)
    if (dist < 0).any() or abs(dist.sum() - 1.0) > 1e-9:
        raise ValueError("step distribution must be a probability vector")
    if not reduction.active:
        return dist.copy()
    out = dist.copy()
    if reduction.mode == "linear":
        out[0] = reduction.rho * dist[0]
    else:
        out[0] = dist[0] ** reduction.gamma
    total = out.sum()
    if total == 0.0:
        raise ValueError("blank reduction removed all probability mass")
    return out / total


@dataclass(frozen=True)
class BeamConfig:
    beam_size: int = 8
    fusion_mode: str = "none"
    lambda1: float = 0.0
    lambda2: float = 0.0
    blank_reduction: BlankReduction = field(default_factory=BlankReduction)
    n_best_out: int = 1

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be at least 1")
        if self.n_best_out < 1:
            raise ValueError("n_best_out must be at least 1")
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode {self.fusion_mode!r}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("fusion weights must be non-negative")
        if self.lambda2 != 0.0 and self.fusion_mode not in ILM_MODES:
            raise ValueError("lambda2 applies only to ILM subtraction modes")
        if self.blank_reduction.active and self.fusion_mode != "sf_reduce_blank":
            raise ValueError(
                "blank reduction applies only to the sf_reduce_blank mode"
            )


def _check_scorers(config, elm, ilm):
    if config.fusion_mode != "none" and elm is None:
        raise ValueError(f"mode {config.fusion_mode} needs an external LM")
    if config.fusion_mode in ILM_MODES and ilm is None:
        raise ValueError(f"mode {config.fusion_mode} needs an ILM estimate")
    if config.fusion_mode == "sf_dr" and ilm.provenance != "density_ratio":
        raise ValueError(
            "sf_dr requires a density-ratio ILM estimate, got "
            f"{ilm.provenance!r}"
        )


@dataclass
class Hypothesis:
    """Beam entry.  The combined score is recomputed from the three
    components on demand, never cached."""

    labels: tuple
    trans_score: float
    elm_score: float
    ilm_score: float
    state: object  # PredState, materialized lazily after pruning


def combined_score(hyp, config):
    score = hyp.trans_score
    if config.lambda1 != 0.0:
        score += config.lambda1 * hyp.elm_score
    if config.lambda2 != 0.0:
        score -= config.lambda2 * hyp.ilm_score
    return score


def _rank_key(hyp, score):
    return (-score, len(hyp.labels), hyp.labels)


def beam_search(params, features, config, elm=None, ilm=None):
    """Ordered N-best decode of one utterance.

    Per frame every hypothesis expands with blank (labels unchanged) and
    with each label; same-label hypotheses merge by log-sum-exp of their
    transducer scores; the beam keeps beam_size entries by combined
    score with deterministic ties (higher score, then shorter, then
    lexicographic).  Finalization adds the lambda1-weighted external-LM
    end-of-sequence score.  Entries of the returned list carry exact
    rescored caches (lattice marginal, full external-LM score).
    """
    _check_scorers(config, elm, ilm)
    cfg = params.config
    vocab = cfg.vocab
    h = tmodel.encode(params, features)
    if h.shape[0] == 0:
        raise ValueError("decoding needs at least one frame")
    use_elm = config.fusion_mode != "none" and config.lambda1 != 0.0
    use_ilm = config.fusion_mode in ILM_MODES and config.lambda2 != 0.0
    reduction = config.blank_reduction

    def state_key(labels):
        return labels if cfg.full_context else labels[-1:]

    states = {(): tmodel.init_pred_state(params)}

    def state_of(labels, parent_state, last_label):
        key = state_key(labels)
        if key not in states:
            states[key] = tmodel.advance_pred_state(
                params, parent_state, last_label
            )
        return states[key]

    beam = [Hypothesis((), 0.0, 0.0, 0.0, states[()])]
    for t in range(h.shape[0]):
        keys = []
        key_index = {}
        for hyp in beam:
            k = state_key(hyp.labels)
            if k not in key_index:
                key_index[k] = len(keys)
                keys.append(k)
        contexts = np.stack([states[k].context for k in keys])
        logq, _ = tmodel.joint_grid_forward(params, h[t : t + 1], contexts)
        logstep = logq[0]
        if reduction.active:
            reduced = np.stack(
                [reduce_blank(np.exp(row), reduction) for row in logstep]
            )
            with np.errstate(divide="ignore"):
                logstep = np.log(reduced)

        merged = {}

        def add(labels, trans, elm_score, ilm_score, parent_state, last_label):
            entry = merged.get(labels)
            if entry is None:
                merged[labels] = [
                    trans, elm_score, ilm_score, parent_state, last_label
                ]
            else:
                entry[0] = np.logaddexp(entry[0], trans)

        for hyp in beam:
            row = logstep[key_index[state_key(hyp.labels)]]
            add(
                hyp.labels, hyp.trans_score + row[0],
                hyp.elm_score, hyp.ilm_score, hyp.state, None,
            )
            for j, lab in enumerate(vocab.labels):
                elm_score = hyp.elm_score
                if use_elm:
                    elm_score += elm.label_log_prob(hyp.labels, lab)
                ilm_score = hyp.ilm_score
                if use_ilm:
                    inc = ilm.label_log_prob(hyp.labels, lab)
                    if inc == NEG_INF:
                        raise ValueError(
                            f"ILM assigns zero probability to label {lab!r} "
                            f"after {hyp.labels!r}; subtraction is undefined"
                        )
                    ilm_score += inc
                add(
                    hyp.labels + (lab,), hyp.trans_score + row[j + 1],
                    elm_score, ilm_score, hyp.state, lab,
                )

        scored = []
        for labels, (trans, e, i, parent_state, last_label) in merged.items():
            hyp = Hypothesis(labels, float(trans), e, i, None)
            scored.append((hyp, combined_score(hyp, config), parent_state,
                           last_label))
        scored.sort(key=lambda item: _rank_key(item[0], item[1]))
        beam = []
        for hyp, _, parent_state, last_label in scored[: config.beam_size]:
            if last_label is None:
                hyp.state = parent_state
            else:
                hyp.state = state_of(hyp.labels, parent_state, last_label)
            beam.append(hyp)

    finals = []
    for hyp in beam:
        score = combined_score(hyp, config)
        if use_elm:
            score += config.lambda1 * elm.eos_log_prob(hyp.labels)
        finals.append((hyp, score))
    finals.sort(key=lambda item: _rank_key(item[0], item[1]))

    hyps = []
    for hyp, _ in finals[: config.n_best_out]:
        hyps.append(
            NBestHyp(
                labels=hyp.labels,
                trans_log_prob=tlattice.seq_log_prob_given_encoding(
                    params, h, hyp.labels
                ),
                lm_log_prob=(
                    tlm.lm_log_prob(elm, hyp.labels)
                    if elm is not None
                    else 0.0
                ),
            )
        )
    return NBestList(hyps=hyps)


def exhaustive_fused_argmax(params, features, config, elm=None, ilm=None):
    """Brute-force fused decision rule over all alignment paths.

    Enumerates every (|V|+1)^T path, collapses to label sequences, and
    accumulates (optionally blank-reduced) path masses; then applies the
    fusion terms of the configured mode and returns (labels, score)
    under the beam tie-breaking order.  Independent of the lattice DP
    and of the beam search; guarded against non-micro inputs.
    """
    _check_scorers(config, elm, ilm)
    cfg = params.config
    vocab = cfg.vocab
    h = tmodel.encode(params, features)
    t_len = h.shape[0]
    if t_len == 0:
        raise ValueError("decoding needs at least one frame")
    if vocab.num_outputs ** t_len > PATH_GUARD:
        raise OracleScaleError(
            f"{vocab.num_outputs ** t_len} alignment paths exceed the "
            f"{PATH_GUARD} guard"
        )
    reduction = (
        config.blank_reduction
        if config.fusion_mode == "sf_reduce_blank"
        else BlankReduction()
    )

    step_memo = {}

    def step_log_dist(t, prefix):
        key = (t, prefix if cfg.full_context else prefix[-1:])
        if key not in step_memo:
            context = tmodel.predict_context(params, prefix)
            logits = tmodel.joint_logits(params, h[t], context)
            shifted = logits - logits.max()
            logdist = shifted - math.log(np.exp(shifted).sum())
            if reduction.active:
                red = reduce_blank(np.exp(logdist), reduction)
                with np.errstate(divide="ignore"):
                    logdist = np.log(red)
            step_memo[key] = logdist
        return step_memo[key]

    masses = {}

    def walk(t, prefix, logp):
        if logp == NEG_INF:
            return
        if t == t_len:
            masses[prefix] = np.logaddexp(masses.get(prefix, NEG_INF), logp)
            return
        dist = step_log_dist(t, prefix)
        walk(t + 1, prefix, logp + dist[0])
        for j, lab in enumerate(vocab.labels):
            walk(t + 1, prefix + (lab,), logp + dist[j + 1])

    walk(0, (), 0.0)

    best = None
    for labels in sorted(masses, key=lambda a: (len(a), a)):
        score = float(masses[labels])
        if config.fusion_mode != "none" and config.lambda1 != 0.0:
            score += config.lambda1 * tlm.lm_log_prob(elm, labels)
        if config.fusion_mode in ILM_MODES and config.lambda2 != 0.0:
            ilm_score = sum(
                ilm.label_log_prob(labels[:i], labels[i])
                for i in range(len(labels))
            )
            score -= config.lambda2 * ilm_score
        key = (-score, len(labels), labels)
        if best is None or key < best[0]:
            best = (key, labels, score)
    return best[1], best[2]


def edit_distance(a, b):
    """Levenshtein distance with unit substitution/insertion/deletion."""
    a, b = tuple(a), tuple(b)
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, start=1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (0 if x == y else 1),
            )
        prev = cur
    return prev[len(b)]


def wer(references, hypotheses):
    """100 * total edit distance / total reference length."""
    if len(references) != len(hypotheses):
        raise ValueError("reference and hypothesis lists differ in length")
    total_len = sum(len(r) for r in references)
    if total_len == 0:
        raise ValueError("WER is undefined for zero total reference length")
    total_edits = sum(
        edit_distance(h, r) for r, h in zip(references, hypotheses)
    )
    return 100.0 * total_edits / total_len
