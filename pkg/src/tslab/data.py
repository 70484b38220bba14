"""Seeded synthetic dataset generation.

Transcripts are sampled from a random n-gram label prior (Dirichlet
transition rows over labels plus end-of-sequence).  Each label then
emits between 1 and frames_per_label_max feature frames equal to its
prototype vector plus Gaussian noise, so S <= T holds by construction
and noise_sigma controls task difficulty.  Sequences shorter than
min_len are rejected and resampled; at max_len the sequence is forced
to stop.  process_distribution enumerates the exact law of this
procedure so sampling statistics can be checked against it.

Everything is driven by one numpy Generator per dataset, making
generation bitwise reproducible under a seed.

Dataset file format: per utterance a header line "UTT <id> T=<t> S=<s>",
then T lines of D whitespace-separated floats (repr, so values reload
bitwise), then one transcript line of S whitespace-separated labels.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from tslab import model as tmodel

MAX_REJECTIONS = 10000
PROCESS_GUARD = 10 ** 5


@dataclass(frozen=True)
class SyntheticDatasetConfig:
    vocab_size: int = 6
    prior_order: int = 2
    frames_per_label_max: int = 2
    feature_dim: int = 4
    noise_sigma: float = 0.35
    train_utts: int = 512
    dev_utts: int = 64
    lm_sequences: int = 2000
    min_len: int = 1
    max_len: int = 6
    prior_concentration: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ValueError("vocabulary size must be at least 1")
        if self.prior_order < 1:
            raise ValueError("prior order must be at least 1")
        if self.frames_per_label_max < 1:
            raise ValueError("frames per label must be at least 1")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be non-negative")
        if not 0 <= self.min_len <= self.max_len:
            raise ValueError("need 0 <= min_len <= max_len")
        if self.prior_concentration <= 0:
            raise ValueError("prior concentration must be positive")


@dataclass(frozen=True)
class LabelPrior:
    """Transition rows over labels + EOS (last slot), one per context of
    length prior_order - 1 (shorter near the sequence start)."""

    vocab: tmodel.Vocabulary
    order: int
    rows: dict

    def context_of(self, history):
        if self.order == 1:
            return ()
        return tuple(history[-(self.order - 1):])

    def row(self, history):
        return self.rows[self.context_of(history)]


@dataclass(frozen=True)
class Utterance:
    utt_id: str
    features: np.ndarray
    transcript: tuple


@dataclass
class Dataset:
    config: SyntheticDatasetConfig
    vocab: tmodel.Vocabulary
    prior: LabelPrior
    prototypes: np.ndarray
    train: list
    dev: list
    lm_corpus: list


def _all_contexts(vocab, order):
    contexts = [()]
    for k in range(1, order):
        prev = [c for c in contexts if len(c) == k - 1]
        for c in prev:
            contexts.extend(c + (lab,) for lab in vocab.labels)
    return contexts


def sample_prior(vocab, order, concentration, rng):
    alphas = np.full(vocab.size + 1, concentration)
    rows = {
        ctx: rng.dirichlet(alphas) for ctx in _all_contexts(vocab, order)
    }
    return LabelPrior(vocab=vocab, order=order, rows=rows)


def sample_transcript(prior, rng, min_len, max_len):
    """One transcript from the prior, rejecting lengths below min_len
    and forcing a stop at max_len."""
    for _ in range(MAX_REJECTIONS):
        seq = []
        while len(seq) < max_len:
            row = prior.row(tuple(seq))
            pick = int(rng.choice(prior.vocab.size + 1, p=row))
            if pick == prior.vocab.size:
                break
            seq.append(prior.vocab.labels[pick])
        if len(seq) >= min_len:
            return tuple(seq)
    raise RuntimeError(
        f"rejection sampling failed {MAX_REJECTIONS} times; "
        "the prior is incompatible with the length bounds"
    )


def process_distribution(prior, min_len, max_len):
    """Exact law of sample_transcript: sequence -> probability.

    Walks the sampling tree (label choices per context, EOS at will,
    forced stop at max_len) and renormalizes over accepted lengths,
    matching the rejection step.
    """
    vocab = prior.vocab
    count = sum(vocab.size ** s for s in range(max_len + 1))
    if count > PROCESS_GUARD:
        raise ValueError(
            f"{count} sequences exceed the {PROCESS_GUARD} enumeration guard"
        )
    raw = {}

    def walk(seq, prob):
        row = prior.row(seq)
        if len(seq) == max_len:
            raw[seq] = prob
            return
        raw[seq] = prob * row[vocab.size]
        for j, lab in enumerate(vocab.labels):
            walk(seq + (lab,), prob * row[j])

    walk((), 1.0)
    accepted = {a: p for a, p in raw.items() if len(a) >= min_len}
    total = sum(accepted.values())
    if total == 0.0:
        raise ValueError("the prior puts no mass on accepted lengths")
    return {a: p / total for a, p in accepted.items()}


def _emit_features(transcript, prototypes, vocab, config, rng):
    frames = []
    for lab in transcript:
        count = int(rng.integers(1, config.frames_per_label_max + 1))
        proto = prototypes[vocab.index(lab) - 1]
        noise = config.noise_sigma * rng.normal(
            size=(count, config.feature_dim)
        )
        frames.append(proto[None, :] + noise)
    if not frames:
        return np.zeros((0, config.feature_dim))
    return np.concatenate(frames, axis=0)


def generate_dataset(config):
    """Train/dev utterances plus a disjoint LM text corpus, all from one
    seeded generator."""
    rng = np.random.default_rng(config.seed)
    vocab = tmodel.Vocabulary(
        tuple(f"w{i}" for i in range(config.vocab_size))
    )
    prior = sample_prior(vocab, config.prior_order, config.prior_concentration, rng)
    prototypes = rng.normal(size=(vocab.size, config.feature_dim))

    def make_split(name, count):
        utts = []
        for i in range(count):
            transcript = sample_transcript(
                prior, rng, config.min_len, config.max_len
            )
            features = _emit_features(
                transcript, prototypes, vocab, config, rng
            )
            utts.append(
                Utterance(
                    utt_id=f"{name}-{i:05d}",
                    features=features,
                    transcript=transcript,
                )
            )
        return utts

    train = make_split("train", config.train_utts)
    dev = make_split("dev", config.dev_utts)
    lm_corpus = [
        sample_transcript(prior, rng, config.min_len, config.max_len)
        for _ in range(config.lm_sequences)
    ]
    return Dataset(
        config=config,
        vocab=vocab,
        prior=prior,
        prototypes=prototypes,
        train=train,
        dev=dev,
        lm_corpus=lm_corpus,
    )


def write_dataset_file(path, utterances):
    with open(path, "w", encoding="utf-8") as fh:
        for utt in utterances:
            t, _ = utt.features.shape
            fh.write(f"UTT {utt.utt_id} T={t} S={len(utt.transcript)}\n")
            for row in utt.features:
                fh.write(" ".join(repr(float(x)) for x in row) + "\n")
            fh.write(" ".join(utt.transcript) + "\n")


def read_dataset_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    utts = []
    pos = 0
    while pos < len(lines):
        parts = lines[pos].split()
        if len(parts) != 4 or parts[0] != "UTT":
            raise ValueError(f"malformed utterance header at line {pos + 1}")
        utt_id = parts[1]
        t = int(parts[2].removeprefix("T="))
        s = int(parts[3].removeprefix("S="))
        pos += 1
        rows = []
        for _ in range(t):
            rows.append([float(x) for x in lines[pos].split()])
            pos += 1
        features = (
            np.array(rows, dtype=np.float64)
            if rows
            else np.zeros((0, 0))
        )
        transcript = tuple(lines[pos].split())
        pos += 1
        if len(transcript) != s:
            raise ValueError(
                f"utterance {utt_id}: transcript length {len(transcript)} "
                f"does not match S={s}"
            )
        utts.append(
            Utterance(utt_id=utt_id, features=features, transcript=transcript)
        )
    return utts
