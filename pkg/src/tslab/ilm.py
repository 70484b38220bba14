"""Internal language model estimation for the transducer.

A locally normalized transducer implicitly learns a prior over label
sequences.  The exact form of that prior is the acoustic expectation
P(a) = sum_X Pr(X) P(a | X), which is only computable by enumeration;
the estimators here approximate it from the model alone or from
training transcripts:

-   zero_encoder: feed a zero vector through the joint in place of the
    encoder frame and read label probabilities from the step softmax.
    With renormalization the blank mass is removed and the label
    distribution rescaled (equivalently, a softmax over the label
    logits only); without it the raw label probabilities are used and
    sum to less than one.
-   density_ratio: an ordinary language model trained on the acoustic
    training transcripts (count-based bigram by default, neural
    optionally).
-   mini_net: a single trainable vector replacing the encoder frame,
    fit by gradient descent to minimize label cross-entropy under the
    frozen prediction and joint networks, blank renormalized away.
-   exact: the enumerated expectation itself over a weighted utterance
    set, stored as a table and exposed through its chain-rule
    factorization (prefix marginals), so it scores incrementally like
    any other estimate.

Estimates produced by the joint network carry no end-of-sequence
event; their eos_log_prob is 0, and decoding subtracts the internal LM
per emitted label only.  The density-ratio and exact estimates do have
a termination event, which decoding likewise never applies.
"""

from dataclasses import dataclass, field

import numpy as np

from tslab import model as tmodel
from tslab import lm as tlm
from tslab.lattice import posterior_table
from tslab.numerics import NEG_INF, log_sum_exp

WEIGHT_TOLERANCE = 1e-9


@dataclass
class IlmEstimate(tlm.SequenceScorer):
    """An internal-LM scorer tagged with how it was obtained."""

    provenance: str
    scorer: object
    table: dict = None

    def label_log_prob(self, history, label):
        return self.scorer.label_log_prob(history, label)

    def eos_log_prob(self, history):
        return self.scorer.eos_log_prob(history)


class _JointChainScorer(tlm.SequenceScorer):
    """Label chain probabilities from the joint with a fixed encoder vector."""

    def __init__(self, params, vector, renormalize):
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (params.config.encoder_dim,):
            raise ValueError(
                f"encoder vector must have shape ({params.config.encoder_dim},)"
            )
        self.params = params
        self.vector = vector
        self.renormalize = renormalize
        self._memo = {}

    def _label_log_probs(self, history):
        history = tuple(history)
        hit = self._memo.get(history)
        if hit is not None:
            return hit
        context = tmodel.predict_context(self.params, history)
        logits = tmodel.joint_logits(self.params, self.vector, context)
        if self.renormalize:
            # Dropping blank and rescaling the remaining mass is exactly
            # a softmax over the label logits alone.
            sub = logits[1:]
            shifted = sub - sub.max()
            logp = shifted - np.log(np.exp(shifted).sum())
        else:
            shifted = logits - logits.max()
            logp = (shifted - np.log(np.exp(shifted).sum()))[1:]
        self._memo[history] = logp
        return logp

    def label_log_prob(self, history, label):
        idx = self.params.config.vocab.index(label) - 1
        return float(self._label_log_probs(history)[idx])

    def eos_log_prob(self, history):
        return 0.0


def zero_encoder_ilm(params, renormalize=True):
    """Internal LM read from the joint at a zero encoder vector."""
    scorer = _JointChainScorer(
        params, np.zeros(params.config.encoder_dim), renormalize
    )
    return IlmEstimate(provenance="zero_encoder", scorer=scorer)


@dataclass(frozen=True)
class DensityRatioConfig:
    kind: str = "ngram"
    order: int = 2
    delta: float = 0.5
    emb_dim: int = 12
    hidden_dim: int = 16
    steps: int = 200
    step_size: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("ngram", "neural"):
            raise ValueError("density-ratio kind must be 'ngram' or 'neural'")


def density_ratio_ilm(transcripts, vocab, config=DensityRatioConfig()):
    """Internal LM approximated by an LM trained on the transcripts."""
    transcripts = [tuple(t) for t in transcripts]
    if not transcripts:
        raise ValueError("density-ratio estimation needs at least one transcript")
    if config.kind == "ngram":
        scorer = tlm.train_ngram(
            transcripts, vocab, order=config.order, delta=config.delta
        )
    else:
        lm_cfg = tlm.NeuralLMConfig(
            vocab=vocab, emb_dim=config.emb_dim, hidden_dim=config.hidden_dim
        )
        scorer, _ = tlm.train_neural_lm(
            transcripts, lm_cfg, config.steps, config.step_size, config.seed
        )
    return IlmEstimate(provenance="density_ratio", scorer=scorer)


def _mini_net_contexts(params, transcripts):
    """Stacked prediction contexts and label indices for all positions."""
    rows = []
    idx = []
    for seq in transcripts:
        seq = tuple(seq)
        if not seq:
            continue
        contexts, _ = tmodel.pred_rollout_forward(params, seq)
        for s, lab in enumerate(seq):
            rows.append(contexts[s])
            idx.append(params.config.vocab.index(lab) - 1)
    if not rows:
        raise ValueError("mini-net training needs at least one non-empty transcript")
    return np.array(rows), np.array(idx)


def mini_net_loss_and_grad(params, vector, contexts, label_idx):
    """Label cross-entropy of the frozen joint at encoder vector ``vector``.

    Blank is renormalized away, so the objective is the softmax
    cross-entropy over label logits only.  Returns (loss, dloss/dvector).
    """
    a = params.arrays
    n = contexts.shape[0]
    pre = vector @ a["joint_w1h"].T + contexts @ a["joint_w1c"].T + a["joint_b1"]
    z = np.tanh(pre)
    logits = z @ a["joint_w2"].T + a["joint_b2"]
    sub = logits[:, 1:]
    m = sub.max(axis=1, keepdims=True)
    sh = sub - m
    logp = sh - np.log(np.exp(sh).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), label_idx].mean()
    dsub = np.exp(logp)
    dsub[np.arange(n), label_idx] -= 1.0
    dsub /= n
    dz = dsub @ a["joint_w2"][1:]
    dpre = dz * (1.0 - z * z)
    dv = dpre.sum(axis=0) @ a["joint_w1h"]
    return float(loss), dv


def mini_net_ilm(params, transcripts, steps=100, step_size=0.5):
    """Fit the constant encoder-replacement vector; returns (estimate, losses).

    The vector starts at zero, so steps=0 reproduces the renormalized
    zero-encoder estimate exactly.
    """
    if steps < 0 or step_size <= 0:
        raise ValueError("steps must be >= 0 and step_size positive")
    contexts, label_idx = _mini_net_contexts(params, transcripts)
    v = np.zeros(params.config.encoder_dim)
    losses = []
    for _ in range(steps):
        loss, dv = mini_net_loss_and_grad(params, v, contexts, label_idx)
        if not np.isfinite(loss):
            raise ValueError("mini-net training diverged (non-finite loss)")
        losses.append(loss)
        v = v - step_size * dv
    scorer = _JointChainScorer(params, v, renormalize=True)
    return IlmEstimate(provenance="mini_net", scorer=scorer), losses


class ExactIlmScorer(tlm.SequenceScorer):
    """Chain-rule view of an enumerated sequence distribution.

    label_log_prob is the ratio of prefix marginals; eos_log_prob is
    the mass of stopping exactly at the history.  Histories outside the
    covered prefix set raise, since the estimate is undefined there.
    """

    def __init__(self, table):
        self.table = dict(table)
        marg_lists = {}
        for seq, logp in self.table.items():
            for i in range(len(seq) + 1):
                marg_lists.setdefault(seq[:i], []).append(logp)
        self.marginals = {
            prefix: log_sum_exp(vals) for prefix, vals in marg_lists.items()
        }

    def _marginal(self, prefix):
        try:
            return self.marginals[prefix]
        except KeyError:
            raise ValueError(
                f"prefix {prefix!r} is outside the exact estimate's coverage"
            ) from None

    def label_log_prob(self, history, label):
        history = tuple(history)
        return self._marginal(history + (label,)) - self._marginal(history)

    def eos_log_prob(self, history):
        history = tuple(history)
        entry = self.table.get(history)
        if entry is None:
            raise ValueError(
                f"sequence {history!r} is outside the exact estimate's coverage"
            )
        return entry - self._marginal(history)


def exact_ilm(params, weighted_utterances, max_len):
    """Enumerated internal LM: sum of per-utterance posteriors.

    weighted_utterances is a list of (features, weight) with weights
    normalized to 1.  The resulting table assigns every sequence up to
    max_len the log of sum_m weight_m * P(sequence | features_m); it
    sums to 1 exactly when max_len covers every utterance's frame
    count.
    """
    items = list(weighted_utterances)
    if not items:
        raise ValueError("exact estimation needs at least one utterance")
    weights = np.array([w for _, w in items], dtype=np.float64)
    if (weights < 0).any():
        raise ValueError("utterance weights must be non-negative")
    if abs(weights.sum() - 1.0) > WEIGHT_TOLERANCE:
        raise ValueError("utterance weights must sum to 1")
    per_utt = [
        posterior_table(params, feats, max_len) for feats, _ in items
    ]
    table = {}
    for seq in tmodel.enumerate_label_sequences(params.config.vocab, max_len):
        parts = [
            float(np.log(w)) + t[seq]
            for t, (_, w) in zip(per_utt, items)
            if w > 0 and seq in t
        ]
        table[seq] = log_sum_exp(parts) if parts else NEG_INF
    return IlmEstimate(
        provenance="exact", scorer=ExactIlmScorer(table), table=table
    )


def write_exact_ilm(path, estimate):
    """Export an exact estimate: 'label label ...<TAB>log-probability',
    sorted lexicographically by label sequence."""
    if estimate.provenance != "exact" or estimate.table is None:
        raise ValueError("only exact estimates can be exported as tables")
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sorted(estimate.table.keys()):
            fh.write(" ".join(seq) + "\t" + repr(estimate.table[seq]) + "\n")


def read_exact_ilm(path):
    """Load an exported table back into an exact estimate."""
    table = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh.read().splitlines():
            seq_part, _, value = line.rpartition("\t")
            table[tuple(seq_part.split())] = float(value)
    return IlmEstimate(provenance="exact", scorer=ExactIlmScorer(table), table=table)
