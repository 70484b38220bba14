"""Experiment pipeline: data, CE training, N-best fine-tuning, metrics.

The pipeline is strictly ordered: generate data, train the external LM,
train the transducer with cross entropy, generate N-best hypotheses
with the CE checkpoint under shallow fusion, then fine-tune with a
sequence criterion while the N-best lists stay frozen (their LM scores
are rescored once with the training LM, which may be the full-context
LM or a bigram).  Every phase is deterministic under the config seed,
so two runs with the same config produce bitwise-identical checkpoints
and result records.

Gradient descent uses deterministic sequential minibatch cycling (no
shuffling): step k trains on utterances [k*B, (k+1)*B) modulo the
corpus, so batch composition is a pure function of the step index.
"""

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from tslab import checkpoint as tckpt
from tslab import data as tdata
from tslab import decoder as tdecoder
from tslab import ilm as tilm
from tslab import lattice as tlattice
from tslab import lm as tlm
from tslab import model as tmodel
from tslab import seqtrain as tseq
from tslab.config import config_lines

CRITERIA = ("mmi_nbest", "mbr_nbest", "lf_mmi", "mmi_exact", "mbr_exact")


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment configuration; every field is a config-file key
    and a CLI flag."""

    experiment_id: str = "exp"
    seed: int = 0
    # synthetic data
    vocab_size: int = 6
    prior_order: int = 2
    frames_per_label_max: int = 2
    feature_dim: int = 4
    noise_sigma: float = 0.6
    train_utts: int = 512
    dev_utts: int = 64
    lm_sequences: int = 1200
    min_len: int = 1
    max_len: int = 6
    prior_concentration: float = 0.5
    # transducer
    encoder_dim: int = 16
    encoder_window: int = 1
    pred_dim: int = 16
    joint_dim: int = 16
    context_size: str = "full"
    pred_cell: str = "lstm"
    # external LM
    elm_kind: str = "neural"
    elm_order: int = 2
    elm_delta: float = 0.5
    elm_emb_dim: int = 12
    elm_hidden_dim: int = 16
    elm_steps: int = 200
    elm_step_size: float = 0.5
    # cross-entropy phase
    ce_steps: int = 1200
    ce_step_size: float = 0.15
    batch_size: int = 32
    # N-best generation
    nbest_n: int = 4
    nbest_lambda1: float = 0.6
    nbest_beam_size: int = 8
    # sequence fine-tune phase
    criterion: str = "mmi_nbest"
    ft_steps: int = 60
    ft_step_size: float = 0.05
    alpha: float = 1.0
    beta: float = 0.3
    train_lm: str = "full"
    lf_top_k: int = 20
    exact_max_len: int = 4
    # decoding sweeps
    beam_size: int = 8
    lambda1_grid: str = "0.0,0.1,0.2,0.3,0.4,0.5,0.6"
    lambda2_grid: str = "0.0,0.1,0.2,0.3,0.4,0.5,0.6"
    reduce_rho_grid: str = "0.3,0.5,0.7"
    reduce_gamma_grid: str = "2.0,4.0"
    swap_lambda1: float = 0.3

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError(
                f"criterion must be one of {CRITERIA}, got {self.criterion!r}"
            )
        if self.elm_kind not in ("neural", "ngram"):
            raise ValueError("elm_kind must be 'neural' or 'ngram'")
        if self.train_lm not in ("full", "bigram"):
            raise ValueError("train_lm must be 'full' or 'bigram'")
        if self.context_size != "full" and not self.context_size.isdigit():
            raise ValueError("context_size must be a positive integer or 'full'")
        if self.criterion == "lf_mmi":
            if self.train_lm != "bigram":
                raise ValueError("lf_mmi training requires train_lm = bigram")
            if self.context_size != "1":
                raise ValueError("lf_mmi training requires context_size = 1")
        for grid in (self.lambda1_grid, self.lambda2_grid,
                     self.reduce_rho_grid, self.reduce_gamma_grid):
            parse_grid(grid)


def parse_grid(text):
    values = tuple(float(v) for v in text.split(",") if v.strip() != "")
    if not values:
        raise ValueError(f"empty value grid {text!r}")
    return values


def config_hash(cfg):
    blob = "\n".join(config_lines(cfg)).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def dataset_config(cfg):
    return tdata.SyntheticDatasetConfig(
        vocab_size=cfg.vocab_size,
        prior_order=cfg.prior_order,
        frames_per_label_max=cfg.frames_per_label_max,
        feature_dim=cfg.feature_dim,
        noise_sigma=cfg.noise_sigma,
        train_utts=cfg.train_utts,
        dev_utts=cfg.dev_utts,
        lm_sequences=cfg.lm_sequences,
        min_len=cfg.min_len,
        max_len=cfg.max_len,
        prior_concentration=cfg.prior_concentration,
        seed=cfg.seed,
    )


def model_config(cfg, vocab):
    return tmodel.ModelConfig(
        vocab=vocab,
        input_dim=cfg.feature_dim,
        encoder_dim=cfg.encoder_dim,
        encoder_window=cfg.encoder_window,
        pred_dim=cfg.pred_dim,
        joint_dim=cfg.joint_dim,
        context_size=None if cfg.context_size == "full" else int(cfg.context_size),
        pred_cell=cfg.pred_cell,
    )


@dataclass(frozen=True)
class ResultRecord:
    experiment_id: str
    config_hash: str
    metric: str
    split: str
    value: float
    seed: int

    def to_json_line(self):
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


def write_records(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json_line() + "\n")


def read_records(path):
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            records.append(ResultRecord(**json.loads(line)))
    return records


# ---------------------------------------------------------------------------
# Training phases
# ---------------------------------------------------------------------------

def _batches(count, batch_size, steps):
    """Deterministic batch index ranges, cycling through the corpus."""
    for step in range(steps):
        start = (step * batch_size) % count
        idx = [(start + i) % count for i in range(min(batch_size, count))]
        yield idx


def train_ce(params, utterances, steps, step_size, batch_size):
    """Minibatch gradient descent on the CE loss; returns loss history."""
    pairs = [(u.features, u.transcript) for u in utterances]
    losses = []
    for idx in _batches(len(pairs), batch_size, steps):
        batch = [pairs[i] for i in idx]
        out = tlattice.ce_loss_and_grad(params, batch)
        if not np.isfinite(out.loss):
            raise ValueError("CE training diverged (non-finite loss)")
        losses.append(out.loss)
        params = params.with_flat(params.flatten() - step_size * out.grad)
    return params, losses


def build_elm(cfg, vocab, corpus):
    """The decoding ELM: full-context neural LM or an n-gram."""
    if cfg.elm_kind == "ngram":
        return tlm.train_ngram(corpus, vocab, cfg.elm_order, cfg.elm_delta)
    lm_cfg = tlm.NeuralLMConfig(
        vocab=vocab, emb_dim=cfg.elm_emb_dim, hidden_dim=cfg.elm_hidden_dim
    )
    lm, _ = tlm.train_neural_lm(
        corpus, lm_cfg, steps=cfg.elm_steps,
        step_size=cfg.elm_step_size, seed=cfg.seed,
    )
    return lm


def build_bigram(cfg, vocab, corpus):
    return tlm.train_ngram(corpus, vocab, order=2, delta=cfg.elm_delta)


def generate_nbest(params, utterances, elm, cfg):
    """Shallow-fusion N-best decode of the training set."""
    beam_cfg = tdecoder.BeamConfig(
        beam_size=cfg.nbest_beam_size,
        fusion_mode="sf",
        lambda1=cfg.nbest_lambda1,
        n_best_out=cfg.nbest_n,
    )
    return [
        (u.utt_id, tdecoder.beam_search(params, u.features, beam_cfg, elm=elm))
        for u in utterances
    ]


def rescore_nbest_lm(nbest, lm):
    """Same hypotheses with LM scores recomputed by the training LM."""
    return tseq.NBestList(
        hyps=[
            tseq.NBestHyp(
                labels=h.labels,
                trans_log_prob=h.trans_log_prob,
                lm_log_prob=tlm.lm_log_prob(lm, h.labels),
            )
            for h in nbest.hyps
        ],
        reference_appended=nbest.reference_appended,
    )


def finetune(params, utterances, nbest_entries, train_lm, cfg):
    """Sequence fine-tuning with frozen N-best lists.

    Per step the criterion loss is averaged over a deterministic
    minibatch; N-best LM caches are rescored once with the training LM.
    """
    scales = tseq.SeqScales(alpha=cfg.alpha, beta=cfg.beta)
    by_id = {u.utt_id: u for u in utterances}
    items = []
    for utt_id, nbest in nbest_entries:
        if utt_id not in by_id:
            raise ValueError(f"N-best entry {utt_id} has no utterance")
        items.append((by_id[utt_id], rescore_nbest_lm(nbest, train_lm)))

    def utt_loss(p, utt, nbest):
        if cfg.criterion == "mmi_nbest":
            return tseq.mmi_loss_nbest(
                p, train_lm, scales, utt.features, nbest, utt.transcript
            )
        if cfg.criterion == "mbr_nbest":
            return tseq.mbr_loss_nbest(
                p, train_lm, scales, utt.features, nbest, utt.transcript,
                tdecoder.edit_distance,
            )
        if cfg.criterion == "lf_mmi":
            return tseq.lf_mmi_loss(
                p, train_lm, scales, utt.features, utt.transcript,
                top_k=cfg.lf_top_k,
            )
        emp = tseq.EmpiricalDistribution([
            tseq.WeightedUtterance(
                utt.utt_id, utt.features, 1.0, {utt.transcript: 1.0}
            )
        ])
        if cfg.criterion == "mmi_exact":
            return tseq.mmi_loss_exact(
                p, train_lm, scales, emp, cfg.exact_max_len
            )
        return tseq.mbr_loss_exact(
            p, train_lm, scales, emp, cfg.exact_max_len,
            tdecoder.edit_distance,
        )

    losses = []
    for idx in _batches(len(items), cfg.batch_size, cfg.ft_steps):
        grad = np.zeros(params.size)
        total = 0.0
        for i in idx:
            utt, nbest = items[i]
            out = utt_loss(params, utt, nbest)
            total += out.loss
            grad += out.grad
        scale = 1.0 / len(idx)
        loss = total * scale
        if not np.isfinite(loss):
            raise ValueError("fine-tuning diverged (non-finite loss)")
        losses.append(loss)
        params = params.with_flat(
            params.flatten() - cfg.ft_step_size * scale * grad
        )
    return params, losses


# ---------------------------------------------------------------------------
# Evaluation helpers
# ---------------------------------------------------------------------------

def decode_utterances(params, utterances, beam_cfg, elm=None, ilm=None):
    """Per-utterance decode lines and the aggregate WER.

    Line format: "UTT <id>\\t<edits> <reference length>\\t<labels...>".
    """
    refs, hyps, lines = [], [], []
    for u in utterances:
        nbest = tdecoder.beam_search(
            params, u.features, beam_cfg, elm=elm, ilm=ilm
        )
        top = nbest.hyps[0].labels
        refs.append(u.transcript)
        hyps.append(top)
        edits = tdecoder.edit_distance(top, u.transcript)
        lines.append(
            f"UTT {u.utt_id}\t{edits} {len(u.transcript)}\t" + " ".join(top)
        )
    return tdecoder.wer(refs, hyps), lines


def ilm_perplexities(params, transcripts):
    """Zero-encoder ILM PPL with and without renormalization."""
    renorm = tilm.zero_encoder_ilm(params, renormalize=True)
    raw = tilm.zero_encoder_ilm(params, renormalize=False)
    return (
        tlm.perplexity(renorm, transcripts),
        tlm.perplexity(raw, transcripts),
    )


def mean_blank_probability(params, utterances):
    return tlattice.mean_blank_probability(
        params, [(u.features, u.transcript) for u in utterances]
    )


# ---------------------------------------------------------------------------
# Table-model convergence run (free softmax table, no transducer)
# ---------------------------------------------------------------------------

def table_model_run(beta, steps=10000, step_size=2.0):
    """Canned exact-MMI convergence run on a free table model.

    Returns (total variation to the closed-form optimum, loss history).
    With beta = 0 the optimum is the empirical distribution itself.
    """
    vocab = tmodel.Vocabulary(("a", "b"))
    lm = tlm.train_ngram(
        [("a",), ("a", "b"), ("b",)], vocab, order=2, delta=0.5
    )
    targets = {("a",): 0.5, ("b",): 0.3, ("a", "b"): 0.2}
    emp = tseq.EmpiricalDistribution(
        [tseq.WeightedUtterance("u0", None, 1.0, targets)]
    )
    scales = tseq.SeqScales(alpha=1.0, beta=beta)
    table = tseq.TableModel.zeros(list(targets), ["u0"])
    losses = tseq.train_table_model(
        table, lm, scales, emp, "mmi", steps=steps, step_size=step_size
    )
    optimum = tseq.mmi_optimum_target(targets, lm, scales)
    tv = tseq.total_variation(table.posterior("u0"), optimum)
    return tv, losses


# ---------------------------------------------------------------------------
# Pipeline driver
# ---------------------------------------------------------------------------

CRITERION_TAGS = {
    "mmi_nbest": "mmi",
    "mbr_nbest": "mbr",
    "lf_mmi": "lf_mmi",
    "mmi_exact": "mmi_exact",
    "mbr_exact": "mbr_exact",
}


@dataclass
class StudyResult:
    config: object
    dataset: object
    elm: object
    bigram: object
    checkpoints: dict
    nbest: list
    records: list
    tables_text: str


def run_pipeline(cfg, out_dir, criteria=None, modes=None):
    """Full ordered pipeline; returns a StudyResult.

    criteria defaults to [cfg.criterion]; passing several reuses the CE
    checkpoint and the frozen N-best lists across fine-tune variants.
    A zero-step fine-tune yields a checkpoint bitwise equal to CE.
    modes restricts the decode sweeps to a subset of fusion modes.
    """
    from tslab import tables as ttables

    if criteria is None:
        criteria = [cfg.criterion]
    if modes is None:
        modes = ttables.MODES
    os.makedirs(out_dir, exist_ok=True)
    chash = config_hash(cfg)

    def record(metric, split, value):
        return ResultRecord(
            experiment_id=cfg.experiment_id, config_hash=chash,
            metric=metric, split=split, value=float(value), seed=cfg.seed,
        )

    records = []
    dataset = tdata.generate_dataset(dataset_config(cfg))
    tdata.write_dataset_file(os.path.join(out_dir, "train.data"), dataset.train)
    tdata.write_dataset_file(os.path.join(out_dir, "dev.data"), dataset.dev)
    tlm.write_corpus(os.path.join(out_dir, "lm_corpus.txt"), dataset.lm_corpus)

    elm = build_elm(cfg, dataset.vocab, dataset.lm_corpus)
    bigram = build_bigram(cfg, dataset.vocab, dataset.lm_corpus)

    init = tmodel.init_params(model_config(cfg, dataset.vocab), cfg.seed)
    ce_params, ce_losses = train_ce(
        init, dataset.train, cfg.ce_steps, cfg.ce_step_size, cfg.batch_size
    )
    tckpt.save_checkpoint(os.path.join(out_dir, "ce.tslab"), ce_params)
    records.append(record("ce_final_loss", "train", ce_losses[-1]))

    nbest = generate_nbest(ce_params, dataset.train, elm, cfg)
    tseq.write_nbest_file(os.path.join(out_dir, "nbest.txt"), nbest)

    checkpoints = {"ce": ce_params}
    for criterion in criteria:
        tag = CRITERION_TAGS[criterion]
        run_cfg = dataclasses.replace(cfg, criterion=criterion)
        train_lm = bigram if run_cfg.train_lm == "bigram" else elm
        ft_params, ft_losses = finetune(
            ce_params, dataset.train, nbest, train_lm, run_cfg
        )
        tckpt.save_checkpoint(os.path.join(out_dir, f"{tag}.tslab"), ft_params)
        checkpoints[tag] = ft_params
        if ft_losses:
            records.append(record(f"{tag}_final_loss", "train", ft_losses[-1]))

    sweep_records, best = ttables.decode_sweeps(
        checkpoints, dataset, cfg, elm, bigram, record, modes=modes
    )
    records.extend(sweep_records)

    for name, params in checkpoints.items():
        transcripts = [u.transcript for u in dataset.dev]
        renorm_ppl, raw_ppl = ilm_perplexities(params, transcripts)
        records.append(record(f"ilm_ppl_renorm/{name}", "dev", renorm_ppl))
        records.append(record(f"ilm_ppl_raw/{name}", "dev", raw_ppl))
        records.append(
            record(
                f"blank_prob/{name}", "dev",
                mean_blank_probability(params, dataset.dev),
            )
        )

    tables_text = ""
    if {"ce", "mmi", "mbr"} <= set(checkpoints) and set(modes) == set(ttables.MODES):
        tables_text = ttables.experiment_tables(
            checkpoints, dataset, cfg, elm, bigram, best
        )
        with open(os.path.join(out_dir, "tables.txt"), "w", encoding="utf-8") as fh:
            fh.write(tables_text)

    write_records(os.path.join(out_dir, "results.jsonl"), records)
    return StudyResult(
        config=cfg, dataset=dataset, elm=elm, bigram=bigram,
        checkpoints=checkpoints, nbest=nbest, records=records,
        tables_text=tables_text,
    )


def run_study(cfg, out_dir):
    """CE plus both N-best fine-tune criteria, sweeps, and tables."""
    return run_pipeline(cfg, out_dir, criteria=["mmi_nbest", "mbr_nbest"])
