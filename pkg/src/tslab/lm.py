"""Language models over label sequences.

Scorers assign chain-rule log-probabilities to label sequences over the
vocabulary, with a dedicated end-of-sequence event so that every scorer
induces a proper distribution over variable-length sequences.  Two
trainable scorers live here:

-   NGramLM: count-based with additive (add-delta) smoothing,

        P(w | ctx) = (count(ctx, w) + delta) / (count(ctx) + delta * (|V| + 1)),

    where the successor space is the vocabulary plus EOS and the context
    is the most recent order - 1 labels (shorter near the sequence
    start).
-   NeuralLM: label embeddings feeding a single Elman recurrent layer
    and a softmax over the vocabulary plus EOS, trained by full-batch
    gradient descent from a seeded initialization.

Both are deterministic: identical corpora and settings reproduce
identical scorers bitwise.
"""

import math
from dataclasses import dataclass

import numpy as np

from tslab.model import EOS
from tslab.numerics import NEG_INF


class SequenceScorer:
    """Chain-rule scorer interface.

    label_log_prob(history, label) is the log-probability of emitting
    ``label`` after the labels in ``history``; eos_log_prob(history) is
    the log-probability of ending the sequence there.  Scorers that do
    not model termination return 0.0 from eos_log_prob.
    """

    def label_log_prob(self, history, label):
        raise NotImplementedError

    def eos_log_prob(self, history):
        raise NotImplementedError


def lm_log_prob(scorer, seq):
    """Full sequence log-probability including the end-of-sequence event."""
    seq = tuple(seq)
    total = 0.0
    for i in range(len(seq)):
        total += scorer.label_log_prob(seq[:i], seq[i])
    return total + scorer.eos_log_prob(seq)


def perplexity(scorer, corpus):
    """exp of the mean negative log-probability per token, EOS counted.

    Token count for a sequence of S labels is S + 1.  A sequence with
    probability exactly zero makes the perplexity infinite, which is
    returned as math.inf rather than raising.  Sums use math.fsum, so
    the result does not depend on corpus order.
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("perplexity over an empty corpus is undefined")
    scores = [lm_log_prob(scorer, seq) for seq in corpus]
    tokens = sum(len(seq) + 1 for seq in corpus)
    if any(s == NEG_INF for s in scores):
        return math.inf
    return math.exp(-math.fsum(scores) / tokens)


# ---------------------------------------------------------------------------
# Count-based n-gram model
# ---------------------------------------------------------------------------

class NGramLM(SequenceScorer):
    """Additively smoothed n-gram model with EOS in the successor space."""

    def __init__(self, vocab, order, delta):
        if order < 1:
            raise ValueError("order must be at least 1")
        if delta < 0:
            raise ValueError("delta must be non-negative")
        self.vocab = vocab
        self.order = order
        self.delta = float(delta)
        self.counts = {}
        self.context_totals = {}

    def _context(self, history):
        history = tuple(history)
        if self.order == 1:
            return ()
        return history[max(0, len(history) - (self.order - 1)):]

    def _check_successor(self, successor):
        if successor != EOS and successor not in self.vocab.labels:
            raise ValueError(f"symbol {successor!r} is neither a label nor EOS")

    def observe(self, history, successor, count=1):
        """Add ``count`` occurrences of (context(history), successor)."""
        self._check_successor(successor)
        self.vocab.check_sequence(self._context(history))
        ctx = self._context(history)
        self.counts[(ctx, successor)] = self.counts.get((ctx, successor), 0) + count
        self.context_totals[ctx] = self.context_totals.get(ctx, 0) + count

    def _log_prob(self, history, successor):
        self._check_successor(successor)
        ctx = self._context(history)
        num = self.counts.get((ctx, successor), 0) + self.delta
        den = self.context_totals.get(ctx, 0) + self.delta * (self.vocab.size + 1)
        if num == 0.0:
            return NEG_INF
        return math.log(num) - math.log(den)

    def label_log_prob(self, history, label):
        if label == EOS:
            raise ValueError("use eos_log_prob for the end-of-sequence event")
        return self._log_prob(history, label)

    def eos_log_prob(self, history):
        return self._log_prob(history, EOS)


def train_ngram(corpus, vocab, order, delta):
    """Count every (context, successor) event including one EOS per sequence."""
    lm = NGramLM(vocab=vocab, order=order, delta=delta)
    for seq in corpus:
        seq = tuple(seq)
        vocab.check_sequence(seq)
        for i in range(len(seq)):
            lm.observe(seq[:i], seq[i])
        lm.observe(seq, EOS)
    return lm


# ---------------------------------------------------------------------------
# Neural (Elman) language model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NeuralLMConfig:
    vocab: object
    emb_dim: int = 12
    hidden_dim: int = 16

    def __post_init__(self):
        if self.emb_dim < 1 or self.hidden_dim < 1:
            raise ValueError("embedding and hidden dimensions must be positive")


def _lm_param_shapes(config):
    v = config.vocab.size
    p = config.emb_dim
    h = config.hidden_dim
    return [
        ("emb", (v, p)),
        ("sos", (p,)),
        ("wih", (h, p)),
        ("whh", (h, h)),
        ("bh", (h,)),
        ("wo", (v + 1, h)),
        ("bo", (v + 1,)),
    ]


class NeuralLM(SequenceScorer):
    """Recurrent LM; output index 0..|V|-1 are labels, index |V| is EOS.

    Scoring memoizes hidden states by history, so repeated prefix
    queries during beam search stay cheap.
    """

    def __init__(self, config, arrays):
        expected = _lm_param_shapes(config)
        names = [n for n, _ in expected]
        if list(arrays.keys()) != names:
            raise ValueError("LM parameter blocks do not match the layout")
        for name, shape in expected:
            if arrays[name].shape != shape or arrays[name].dtype != np.float64:
                raise ValueError(f"LM block {name} must be float64 with shape {shape}")
        self.config = config
        self.arrays = arrays
        self._memo = {}

    @property
    def size(self):
        return sum(a.size for a in self.arrays.values())

    def flatten(self):
        return np.concatenate([a.ravel() for a in self.arrays.values()])

    def with_flat(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size,):
            raise ValueError(f"flat vector must have length {self.size}")
        arrays = {}
        offset = 0
        for name, shape in _lm_param_shapes(self.config):
            n = int(np.prod(shape))
            arrays[name] = vec[offset:offset + n].reshape(shape).copy()
            offset += n
        return NeuralLM(self.config, arrays)

    def _state(self, history):
        history = tuple(history)
        hit = self._memo.get(history)
        if hit is not None:
            return hit
        a = self.arrays
        if not history:
            h = np.tanh(a["wih"] @ a["sos"] + a["bh"])
        else:
            prev, _ = self._state(history[:-1])
            e = a["emb"][self.config.vocab.index(history[-1]) - 1]
            h = np.tanh(a["wih"] @ e + a["whh"] @ prev + a["bh"])
        logits = a["wo"] @ h + a["bo"]
        shifted = logits - logits.max()
        logp = shifted - np.log(np.exp(shifted).sum())
        self._memo[history] = (h, logp)
        return self._memo[history]

    def label_log_prob(self, history, label):
        _, logp = self._state(history)
        return float(logp[self.config.vocab.index(label) - 1])

    def eos_log_prob(self, history):
        _, logp = self._state(history)
        return float(logp[self.config.vocab.size])


def _lm_batch_loss_and_grad(config, arrays, corpus):
    """Mean per-token cross-entropy and gradients over a padded batch."""
    vocab = config.vocab
    v = vocab.size
    n = len(corpus)
    lengths = np.array([len(seq) for seq in corpus])
    steps = int(lengths.max()) + 1
    # token id at each step: label index (0-based) or v for EOS; -1 inactive
    targets = np.full((n, steps), -1, dtype=np.int64)
    inputs = np.full((n, steps), -1, dtype=np.int64)  # -1 means SOS row
    for row, seq in enumerate(corpus):
        for i, lab in enumerate(seq):
            targets[row, i] = vocab.index(lab) - 1
            if i + 1 < steps:
                inputs[row, i + 1] = vocab.index(lab) - 1
        targets[row, len(seq)] = v
    active = targets >= 0
    token_count = int(active.sum())

    emb, sos = arrays["emb"], arrays["sos"]
    wih, whh, bh = arrays["wih"], arrays["whh"], arrays["bh"]
    wo, bo = arrays["wo"], arrays["bo"]

    h = np.zeros((n, config.hidden_dim))
    hs, es, qs = [], [], []
    loss = 0.0
    for t in range(steps):
        e = np.where(inputs[:, t][:, None] >= 0,
                     emb[np.maximum(inputs[:, t], 0)], sos[None, :])
        h = np.tanh(e @ wih.T + h @ whh.T + bh)
        logits = h @ wo.T + bo
        m = logits.max(axis=1, keepdims=True)
        sh = logits - m
        logz = np.log(np.exp(sh).sum(axis=1, keepdims=True))
        logp = sh - logz
        q = np.exp(logp)
        mask = active[:, t]
        if mask.any():
            rows = np.where(mask)[0]
            loss -= logp[rows, targets[rows, t]].sum()
        hs.append(h)
        es.append(e)
        qs.append(q)
    loss /= token_count

    grads = {k: np.zeros_like(a) for k, a in arrays.items()}
    dh_next = np.zeros_like(h)
    for t in range(steps - 1, -1, -1):
        q = qs[t].copy()
        mask = active[:, t]
        dlogits = np.zeros_like(q)
        if mask.any():
            rows = np.where(mask)[0]
            dlogits[rows] = q[rows]
            dlogits[rows, targets[rows, t]] -= 1.0
        dlogits /= token_count
        grads["wo"] += dlogits.T @ hs[t]
        grads["bo"] += dlogits.sum(axis=0)
        dh = dlogits @ wo + dh_next
        dpre = dh * (1.0 - hs[t] * hs[t])
        grads["wih"] += dpre.T @ es[t]
        grads["bh"] += dpre.sum(axis=0)
        if t > 0:
            grads["whh"] += dpre.T @ hs[t - 1]
            dh_next = dpre @ whh
        de = dpre @ wih
        sos_rows = inputs[:, t] < 0
        grads["sos"] += de[sos_rows].sum(axis=0)
        emb_rows = np.where(~sos_rows)[0]
        np.add.at(grads["emb"], inputs[emb_rows, t], de[emb_rows])
    return loss, grads


def init_neural_lm(config, seed):
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in _lm_param_shapes(config):
        arrays[name] = rng.uniform(-0.1, 0.1, size=shape)
    return NeuralLM(config, arrays)


def neural_lm_loss_and_grad(lm, corpus):
    """Mean per-token cross-entropy with its flat gradient (for checking)."""
    corpus = [tuple(seq) for seq in corpus]
    if not corpus:
        raise ValueError("loss over an empty corpus is undefined")
    for seq in corpus:
        lm.config.vocab.check_sequence(seq)
    loss, grads = _lm_batch_loss_and_grad(lm.config, lm.arrays, corpus)
    flat = np.concatenate(
        [grads[name].ravel() for name, _ in _lm_param_shapes(lm.config)]
    )
    return loss, flat


def train_neural_lm(corpus, config, steps, step_size, seed):
    """Full-batch gradient descent from a seeded init; returns (lm, losses)."""
    corpus = [tuple(seq) for seq in corpus]
    if not corpus:
        raise ValueError("cannot train a language model on an empty corpus")
    if steps < 0 or step_size <= 0:
        raise ValueError("steps must be >= 0 and step_size positive")
    lm = init_neural_lm(config, seed)
    losses = []
    for _ in range(steps):
        loss, grad = neural_lm_loss_and_grad(lm, corpus)
        if not np.isfinite(loss):
            raise ValueError("language model training diverged (non-finite loss)")
        losses.append(loss)
        lm = lm.with_flat(lm.flatten() - step_size * grad)
    return lm, losses


# ---------------------------------------------------------------------------
# Corpus text format: one sequence per line, labels whitespace separated
# ---------------------------------------------------------------------------

def write_corpus(path, corpus):
    with open(path, "w", encoding="utf-8") as fh:
        for seq in corpus:
            fh.write(" ".join(seq) + "\n")


def read_corpus(path):
    with open(path, "r", encoding="utf-8") as fh:
        return [tuple(line.split()) for line in fh.read().splitlines()]
