"""Strictly monotonic neural transducer model.

The model emits exactly one output symbol (a label or the blank symbol)
per input frame, so an utterance with T frames has alignment paths of
length exactly T and can carry at most T labels.  Removing blanks from
an alignment yields the label sequence; there is no repetition merging.

Components:

-   Encoder: a per-frame feedforward network over a symmetric window of
    input frames (zero-padded at the edges), two layers with a tanh
    hidden activation and an affine output.
-   Prediction network: label embeddings plus either a two-layer
    feedforward net over the most recent label (context-1) or a
    recurrent net over the whole label history (full context, with an
    Elman or LSTM cell).  A dedicated learned embedding stands in for
    the empty history and is consumed first by the recurrent variants.
-   Joint network: one tanh hidden layer over the concatenated encoder
    frame and prediction context, followed by an affine map to
    |vocabulary| + 1 logits.  Index 0 is blank; labels follow in
    vocabulary order.

All weights are float64 numpy arrays addressable as a single flat
parameter vector in a fixed, documented order.  Forward passes return
caches that the corresponding backward passes consume; gradients are
returned as name -> array dicts matching the parameter layout.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np

from tslab.numerics import stable_softmax

BLANK = "<blank>"
EOS = "</s>"

INIT_SCALE = 0.1


@dataclass(frozen=True)
class Vocabulary:
    """Ordered label inventory; blank and EOS are reserved symbols outside it."""

    labels: tuple

    def __post_init__(self):
        if len(self.labels) == 0:
            raise ValueError("vocabulary must contain at least one label")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("vocabulary labels must be unique")
        for lab in self.labels:
            if not isinstance(lab, str) or not lab:
                raise ValueError("labels must be non-empty strings")
            if any(ch.isspace() for ch in lab):
                raise ValueError(f"label {lab!r} contains whitespace")
            if lab in (BLANK, EOS):
                raise ValueError(f"label {lab!r} collides with a reserved symbol")

    @property
    def size(self):
        return len(self.labels)

    @property
    def num_outputs(self):
        """Output dimension of the joint network: blank plus every label."""
        return len(self.labels) + 1

    def index(self, label):
        """Joint-output index of a label (blank occupies index 0)."""
        try:
            return self.labels.index(label) + 1
        except ValueError:
            raise ValueError(f"label {label!r} not in vocabulary") from None

    def label_of(self, index):
        if not 1 <= index <= len(self.labels):
            raise ValueError(f"index {index} does not name a label")
        return self.labels[index - 1]

    def check_sequence(self, seq):
        for lab in seq:
            if lab not in self.labels:
                raise ValueError(f"label {lab!r} not in vocabulary")


def collapse(steps):
    """Map an alignment (per-frame symbols) to its label sequence.

    Removes blank symbols; repeated labels are kept, never merged.
    """
    return tuple(sym for sym in steps if sym != BLANK)


def enumerate_label_sequences(vocab, max_len):
    """All label sequences of length 0..max_len, ordered by length then
    vocabulary order within each length."""
    if max_len < 0:
        raise ValueError("max_len must be non-negative")
    out = [()]
    frontier = [()]
    for _ in range(max_len):
        frontier = [seq + (lab,) for seq in frontier for lab in vocab.labels]
        out.extend(frontier)
    return out


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; context_size None means full context."""

    vocab: Vocabulary
    input_dim: int
    encoder_dim: int = 16
    encoder_window: int = 1
    pred_dim: int = 16
    joint_dim: int = 16
    context_size: object = 1
    pred_cell: str = "elman"

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        for name in ("encoder_dim", "pred_dim", "joint_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.encoder_window < 0:
            raise ValueError("encoder_window must be non-negative")
        if self.context_size not in (1, None):
            raise ValueError("context_size must be 1 or None (full context)")
        if self.pred_cell not in ("elman", "lstm"):
            raise ValueError("pred_cell must be 'elman' or 'lstm'")

    @property
    def full_context(self):
        return self.context_size is None


def param_shapes(config):
    """Fixed (name, shape) layout defining the flat parameter order."""
    d = config.input_dim
    e = config.encoder_dim
    p = config.pred_dim
    j = config.joint_dim
    win = 2 * config.encoder_window + 1
    v = config.vocab.size
    shapes = [
        ("enc_w1", (e, win * d)),
        ("enc_b1", (e,)),
        ("enc_w2", (e, e)),
        ("enc_b2", (e,)),
        ("pred_emb", (v, p)),
        ("pred_sos", (p,)),
    ]
    if config.full_context:
        g = 4 * p if config.pred_cell == "lstm" else p
        shapes += [
            ("pred_wih", (g, p)),
            ("pred_whh", (g, p)),
            ("pred_bh", (g,)),
        ]
    else:
        shapes += [
            ("pred_w1", (p, p)),
            ("pred_b1", (p,)),
            ("pred_w2", (p, p)),
            ("pred_b2", (p,)),
        ]
    shapes += [
        ("joint_w1h", (j, e)),
        ("joint_w1c", (j, p)),
        ("joint_b1", (j,)),
        ("joint_w2", (v + 1, j)),
        ("joint_b2", (v + 1,)),
    ]
    return shapes

ENCODER_BLOCKS = ("enc_w1", "enc_b1", "enc_w2", "enc_b2")


@dataclass
class TransducerParams:
    """All trainable weights, addressable as a flat float64 vector."""

    config: ModelConfig
    arrays: dict

    def __post_init__(self):
        expected = param_shapes(self.config)
        names = [n for n, _ in expected]
        if list(self.arrays.keys()) != names:
            raise ValueError("parameter blocks do not match the configured layout")
        for name, shape in expected:
            arr = self.arrays[name]
            if arr.shape != shape or arr.dtype != np.float64:
                raise ValueError(f"block {name} must be float64 with shape {shape}")

    @property
    def size(self):
        return sum(a.size for a in self.arrays.values())

    def flatten(self):
        return np.concatenate([a.ravel() for a in self.arrays.values()])

    def with_flat(self, vec):
        """New TransducerParams with weights taken from a flat vector."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size,):
            raise ValueError(f"flat vector must have length {self.size}")
        arrays = {}
        offset = 0
        for name, shape in param_shapes(self.config):
            n = int(np.prod(shape))
            arrays[name] = vec[offset:offset + n].reshape(shape).copy()
            offset += n
        return TransducerParams(config=self.config, arrays=arrays)

    def copy(self):
        return TransducerParams(
            config=self.config,
            arrays={k: v.copy() for k, v in self.arrays.items()},
        )


def init_params(config, seed):
    """Seeded uniform [-0.1, 0.1] initialization in flat-layout order."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in param_shapes(config):
        arrays[name] = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
    return TransducerParams(config=config, arrays=arrays)


def zero_grads(config):
    return {name: np.zeros(shape) for name, shape in param_shapes(config)}


def grads_to_flat(config, grads):
    return np.concatenate([grads[name].ravel() for name, _ in param_shapes(config)])


def add_grads(total, part, scale=1.0):
    """total += scale * part for every block present in part."""
    for name, arr in part.items():
        total[name] += scale * arr
    return total


# ---------------------------------------------------------------------------
# Encoder
# ---------------------------------------------------------------------------

def _window_stack(features, window):
    """Stack each frame with its +/- window neighbours, zero padded."""
    t, d = features.shape
    if window == 0:
        return features.copy()
    padded = np.zeros((t + 2 * window, d))
    padded[window:window + t] = features
    cols = [padded[k:k + t] for k in range(2 * window + 1)]
    return np.concatenate(cols, axis=1)


def encode_forward(params, features):
    """Encoder forward pass; returns (H, cache) with H of shape (T, E)."""
    cfg = params.config
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != cfg.input_dim:
        raise ValueError(
            f"features must have shape (T, {cfg.input_dim}); got {feats.shape}"
        )
    if feats.shape[0] == 0:
        raise ValueError("features must contain at least one frame")
    xw = _window_stack(feats, cfg.encoder_window)
    z1 = np.tanh(xw @ params.arrays["enc_w1"].T + params.arrays["enc_b1"])
    h = z1 @ params.arrays["enc_w2"].T + params.arrays["enc_b2"]
    return h, (xw, z1)


def encode_backward(params, cache, dh):
    """Gradients of the encoder blocks given dLoss/dH."""
    xw, z1 = cache
    grads = {}
    grads["enc_w2"] = dh.T @ z1
    grads["enc_b2"] = dh.sum(axis=0)
    dz1 = dh @ params.arrays["enc_w2"]
    dpre = dz1 * (1.0 - z1 * z1)
    grads["enc_w1"] = dpre.T @ xw
    grads["enc_b1"] = dpre.sum(axis=0)
    return grads


def encode(params, features):
    """Encoder output frames only; see encode_forward for the cached form."""
    h, _ = encode_forward(params, features)
    return h


# ---------------------------------------------------------------------------
# Prediction network
# ---------------------------------------------------------------------------

def _embedding_rows(params, target):
    """Input embeddings for the empty-history symbol followed by target labels."""
    cfg = params.config
    cfg.vocab.check_sequence(target)
    idx = [cfg.vocab.index(lab) - 1 for lab in target]
    rows = np.empty((len(target) + 1, cfg.pred_dim))
    rows[0] = params.arrays["pred_sos"]
    if idx:
        rows[1:] = params.arrays["pred_emb"][idx]
    return rows, idx


def _lstm_step(params, e, h_prev, c_prev):
    p = params.config.pred_dim
    gates = params.arrays["pred_wih"] @ e + params.arrays["pred_whh"] @ h_prev
    gates = gates + params.arrays["pred_bh"]
    i = 1.0 / (1.0 + np.exp(-gates[0:p]))
    f = 1.0 / (1.0 + np.exp(-gates[p:2 * p]))
    g = np.tanh(gates[2 * p:3 * p])
    o = 1.0 / (1.0 + np.exp(-gates[3 * p:4 * p]))
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (i, f, g, o, tc, h_prev, c_prev, e)


def pred_rollout_forward(params, target):
    """Prediction contexts for every history prefix of ``target``.

    Returns (C, cache) where C has shape (S + 1, P); row s is the context
    vector conditioned on target[:s].
    """
    cfg = params.config
    rows, idx = _embedding_rows(params, target)
    s1 = len(target) + 1
    if not cfg.full_context:
        # Context-1: only the most recent label matters, so each row of
        # the embedding stack feeds the two-layer net independently.
        z1 = np.tanh(rows @ params.arrays["pred_w1"].T + params.arrays["pred_b1"])
        c = z1 @ params.arrays["pred_w2"].T + params.arrays["pred_b2"]
        return c, ("context1", rows, z1, idx)
    if cfg.pred_cell == "elman":
        states = np.zeros((s1, cfg.pred_dim))
        h = np.zeros(cfg.pred_dim)
        for i in range(s1):
            pre = (
                params.arrays["pred_wih"] @ rows[i]
                + params.arrays["pred_whh"] @ h
                + params.arrays["pred_bh"]
            )
            h = np.tanh(pre)
            states[i] = h
        return states.copy(), ("elman", rows, states, idx)
    states = np.zeros((s1, cfg.pred_dim))
    step_caches = []
    h = np.zeros(cfg.pred_dim)
    c = np.zeros(cfg.pred_dim)
    for i in range(s1):
        h, c, step = _lstm_step(params, rows[i], h, c)
        states[i] = h
        step_caches.append(step)
    return states.copy(), ("lstm", rows, states, step_caches, idx)


def pred_rollout_backward(params, cache, dc):
    """Gradients of the prediction blocks given dLoss/dC over all prefixes."""
    cfg = params.config
    kind = cache[0]
    grads = {}
    if kind == "context1":
        _, inputs, z1, idx = cache
        grads["pred_w2"] = dc.T @ z1
        grads["pred_b2"] = dc.sum(axis=0)
        dz1 = dc @ params.arrays["pred_w2"]
        dpre = dz1 * (1.0 - z1 * z1)
        grads["pred_w1"] = dpre.T @ inputs
        grads["pred_b1"] = dpre.sum(axis=0)
        dinputs = dpre @ params.arrays["pred_w1"]
        grads["pred_sos"] = dinputs[0].copy()
        demb = np.zeros_like(params.arrays["pred_emb"])
        for row, j in enumerate(idx):
            demb[j] += dinputs[row + 1]
        grads["pred_emb"] = demb
        return grads
    if kind == "elman":
        _, rows, states, idx = cache
        s1 = states.shape[0]
        dwih = np.zeros_like(params.arrays["pred_wih"])
        dwhh = np.zeros_like(params.arrays["pred_whh"])
        dbh = np.zeros_like(params.arrays["pred_bh"])
        drows = np.zeros_like(rows)
        dh = np.zeros(cfg.pred_dim)
        for i in range(s1 - 1, -1, -1):
            dh = dh + dc[i]
            dpre = dh * (1.0 - states[i] * states[i])
            h_prev = states[i - 1] if i > 0 else np.zeros(cfg.pred_dim)
            dwih += np.outer(dpre, rows[i])
            dwhh += np.outer(dpre, h_prev)
            dbh += dpre
            drows[i] = dpre @ params.arrays["pred_wih"]
            dh = dpre @ params.arrays["pred_whh"]
        grads["pred_wih"] = dwih
        grads["pred_whh"] = dwhh
        grads["pred_bh"] = dbh
    else:
        _, rows, states, step_caches, idx = cache
        p = cfg.pred_dim
        s1 = states.shape[0]
        dwih = np.zeros_like(params.arrays["pred_wih"])
        dwhh = np.zeros_like(params.arrays["pred_whh"])
        dbh = np.zeros_like(params.arrays["pred_bh"])
        drows = np.zeros_like(rows)
        dh = np.zeros(p)
        dcell = np.zeros(p)
        for step in range(s1 - 1, -1, -1):
            i, f, g, o, tc, h_prev, c_prev, e = step_caches[step]
            dh = dh + dc[step]
            do = dh * tc
            dct = dh * o * (1.0 - tc * tc) + dcell
            di = dct * g
            df = dct * c_prev
            dg = dct * i
            dcell = dct * f
            dgates = np.concatenate([
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ])
            dwih += np.outer(dgates, e)
            dwhh += np.outer(dgates, h_prev)
            dbh += dgates
            drows[step] = dgates @ params.arrays["pred_wih"]
            dh = dgates @ params.arrays["pred_whh"]
        grads["pred_wih"] = dwih
        grads["pred_whh"] = dwhh
        grads["pred_bh"] = dbh
    grads["pred_sos"] = drows[0].copy()
    demb = np.zeros_like(params.arrays["pred_emb"])
    for row, j in enumerate(idx):
        demb[j] += drows[row + 1]
    grads["pred_emb"] = demb
    return grads


def predict_context(params, history):
    """Context vector for one label history."""
    c, _ = pred_rollout_forward(params, tuple(history))
    return c[-1]


@dataclass(frozen=True)
class PredState:
    """Incremental prediction-network state used by the beam decoder."""

    context: np.ndarray
    hidden: object


def init_pred_state(params):
    cfg = params.config
    if not cfg.full_context:
        return PredState(context=predict_context(params, ()), hidden=None)
    if cfg.pred_cell == "elman":
        pre = params.arrays["pred_wih"] @ params.arrays["pred_sos"]
        pre = pre + params.arrays["pred_bh"]
        h = np.tanh(pre)
        return PredState(context=h, hidden=h)
    h0 = np.zeros(cfg.pred_dim)
    c0 = np.zeros(cfg.pred_dim)
    h, c, _ = _lstm_step(params, params.arrays["pred_sos"], h0, c0)
    return PredState(context=h, hidden=(h, c))


def advance_pred_state(params, state, label):
    cfg = params.config
    e = params.arrays["pred_emb"][cfg.vocab.index(label) - 1]
    if not cfg.full_context:
        z1 = np.tanh(params.arrays["pred_w1"] @ e + params.arrays["pred_b1"])
        c = params.arrays["pred_w2"] @ z1 + params.arrays["pred_b2"]
        return PredState(context=c, hidden=None)
    if cfg.pred_cell == "elman":
        pre = (
            params.arrays["pred_wih"] @ e
            + params.arrays["pred_whh"] @ state.hidden
            + params.arrays["pred_bh"]
        )
        h = np.tanh(pre)
        return PredState(context=h, hidden=h)
    h, c, _ = _lstm_step(params, e, *state.hidden)
    return PredState(context=h, hidden=(h, c))


# ---------------------------------------------------------------------------
# Joint network
# ---------------------------------------------------------------------------

def joint_logits(params, h, c):
    """Logits over blank + labels for one (frame, context) pair."""
    cfg = params.config
    h = np.asarray(h, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if h.shape != (cfg.encoder_dim,):
        raise ValueError(f"encoder frame must have shape ({cfg.encoder_dim},)")
    if c.shape != (cfg.pred_dim,):
        raise ValueError(f"prediction context must have shape ({cfg.pred_dim},)")
    z = np.tanh(
        params.arrays["joint_w1h"] @ h
        + params.arrays["joint_w1c"] @ c
        + params.arrays["joint_b1"]
    )
    return params.arrays["joint_w2"] @ z + params.arrays["joint_b2"]


def step_posterior(params, h, c):
    """Per-step output distribution (blank at index 0, labels after)."""
    return stable_softmax(joint_logits(params, h, c))


def joint_grid_forward(params, h, c):
    """Joint logits and log-posteriors for every (frame, prefix) pair.

    h: (T, E) encoder output; c: (S + 1, P) prediction contexts.
    Returns (logq, cache) with logq of shape (T, S + 1, V + 1).
    """
    hh = h @ params.arrays["joint_w1h"].T
    cc = c @ params.arrays["joint_w1c"].T
    pre = hh[:, None, :] + cc[None, :, :] + params.arrays["joint_b1"]
    z = np.tanh(pre)
    logits = z @ params.arrays["joint_w2"].T + params.arrays["joint_b2"]
    m = logits.max(axis=-1, keepdims=True)
    shifted = logits - m
    logq = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    return logq, (h, c, z, logq)


def joint_grid_backward(params, cache, dlogits):
    """Backward through the joint grid.

    dlogits has shape (T, S + 1, V + 1).  Returns (grads, dH, dC).
    """
    h, c, z, _ = cache
    grads = {}
    grads["joint_w2"] = np.einsum("tsv,tsj->vj", dlogits, z)
    grads["joint_b2"] = dlogits.sum(axis=(0, 1))
    dz = dlogits @ params.arrays["joint_w2"]
    dpre = dz * (1.0 - z * z)
    grads["joint_b1"] = dpre.sum(axis=(0, 1))
    grads["joint_w1h"] = np.einsum("tsj,te->je", dpre, h)
    grads["joint_w1c"] = np.einsum("tsj,sp->jp", dpre, c)
    dh = np.einsum("tsj,je->te", dpre, params.arrays["joint_w1h"])
    dc = np.einsum("tsj,jp->sp", dpre, params.arrays["joint_w1c"])
    return grads, dh, dc


# ---------------------------------------------------------------------------
# Component swapping
# ---------------------------------------------------------------------------

def swap_components(encoder_source, predjoint_source):
    """New parameters taking the encoder from one model and the
    prediction + joint networks (and everything else) from another.

    The two configurations must agree on encoder output dimension and
    vocabulary; the merged configuration keeps the encoder geometry of
    ``encoder_source`` and all other settings of ``predjoint_source``.
    """
    a, b = encoder_source.config, predjoint_source.config
    if a.encoder_dim != b.encoder_dim:
        raise ValueError(
            "swap requires matching encoder output dimensions "
            f"({a.encoder_dim} vs {b.encoder_dim})"
        )
    if a.vocab != b.vocab:
        raise ValueError("swap requires identical vocabularies")
    merged_cfg = dataclasses.replace(
        b, input_dim=a.input_dim, encoder_window=a.encoder_window
    )
    arrays = {}
    for name, _ in param_shapes(merged_cfg):
        src = encoder_source if name in ENCODER_BLOCKS else predjoint_source
        arrays[name] = src.arrays[name].copy()
    return TransducerParams(config=merged_cfg, arrays=arrays)
