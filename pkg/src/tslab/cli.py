"""Command-line interface.

Subcommands: gen-data, train-ce, gen-nbest, train-seq, decode, ilm-ppl,
swap-eval, tables, oracle-check.  Every experiment-config key can come
from a ``--config`` file (flat key = value text) or be overridden by a
flag of the same name; environment variables are never read.

Decode output format, one line per utterance:
"UTT <id> <tab> <edit distance> <reference length> <tab> <labels...>".
"""

import argparse
import os
import sys

import numpy as np

from tslab import checkpoint as tckpt
from tslab import data as tdata
from tslab import decoder as tdecoder
from tslab import ilm as tilm
from tslab import lattice as tlattice
from tslab import lm as tlm
from tslab import model as tmodel
from tslab import pipeline as tpipe
from tslab import seqtrain as tseq
from tslab import tables as ttables
from tslab.config import (
    add_config_flags,
    build_config,
    flag_overrides,
    parse_config_file,
)
from tslab.numerics import grad_check


def _load_config(args):
    file_values = parse_config_file(args.config) if args.config else None
    overrides = flag_overrides(args, tpipe.ExperimentConfig)
    return build_config(tpipe.ExperimentConfig, file_values, overrides)


def _read_split(data_dir, name):
    path = os.path.join(data_dir, f"{name}.data")
    if not os.path.exists(path):
        raise ValueError(f"missing dataset file {path} (run gen-data first)")
    return tdata.read_dataset_file(path)


def _read_corpus(data_dir):
    path = os.path.join(data_dir, "lm_corpus.txt")
    if not os.path.exists(path):
        raise ValueError(f"missing LM corpus {path} (run gen-data first)")
    return tlm.read_corpus(path)


def _load_ckpt(path, what):
    if not os.path.exists(path):
        raise ValueError(f"missing {what} checkpoint {path}")
    return tckpt.load_checkpoint(path)


def cmd_gen_data(args):
    cfg = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    dataset = tdata.generate_dataset(tpipe.dataset_config(cfg))
    tdata.write_dataset_file(os.path.join(args.out, "train.data"), dataset.train)
    tdata.write_dataset_file(os.path.join(args.out, "dev.data"), dataset.dev)
    tlm.write_corpus(os.path.join(args.out, "lm_corpus.txt"), dataset.lm_corpus)
    print(
        f"wrote {len(dataset.train)} train / {len(dataset.dev)} dev "
        f"utterances and {len(dataset.lm_corpus)} LM sequences to {args.out}"
    )
    return 0


def cmd_train_ce(args):
    cfg = _load_config(args)
    train = _read_split(args.data, "train")
    vocab = tmodel.Vocabulary(tuple(f"w{i}" for i in range(cfg.vocab_size)))
    params = tmodel.init_params(tpipe.model_config(cfg, vocab), cfg.seed)
    params, losses = tpipe.train_ce(
        params, train, cfg.ce_steps, cfg.ce_step_size, cfg.batch_size
    )
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    tckpt.save_checkpoint(args.out, params)
    print(f"CE training: {len(losses)} steps, final loss {losses[-1]:.6f}")
    print(f"wrote {args.out}")
    return 0


def cmd_gen_nbest(args):
    cfg = _load_config(args)
    params = _load_ckpt(args.ckpt, "CE")
    train = _read_split(args.data, "train")
    elm = tpipe.build_elm(cfg, params.config.vocab, _read_corpus(args.data))
    entries = tpipe.generate_nbest(params, train, elm, cfg)
    tseq.write_nbest_file(args.out, entries)
    print(f"wrote {len(entries)} N-best lists to {args.out}")
    return 0


def cmd_train_seq(args):
    cfg = _load_config(args)
    if args.table_model:
        tv, losses = tpipe.table_model_run(cfg.beta)
        print(
            f"table-model exact MMI: beta={cfg.beta}, {len(losses)} steps, "
            f"final loss {losses[-1]:.9f}"
        )
        print(f"total variation to the closed-form optimum: {tv:.3e}")
        return 0 if tv <= 1e-3 else 1
    for name in ("ckpt", "data", "out"):
        if getattr(args, name) is None:
            raise ValueError(f"train-seq needs --{name}")
    params = _load_ckpt(args.ckpt, "CE")
    train = _read_split(args.data, "train")
    corpus = _read_corpus(args.data)
    nbest = tseq.read_nbest_file(args.nbest) if args.nbest else []
    if cfg.criterion in ("mmi_nbest", "mbr_nbest") and not nbest:
        raise ValueError(
            f"criterion {cfg.criterion} needs --nbest (run gen-nbest first)"
        )
    vocab = params.config.vocab
    if cfg.train_lm == "bigram":
        train_lm = tpipe.build_bigram(cfg, vocab, corpus)
    else:
        train_lm = tpipe.build_elm(cfg, vocab, corpus)
    params, losses = tpipe.finetune(params, train, nbest, train_lm, cfg)
    tckpt.save_checkpoint(args.out, params)
    final = f", final loss {losses[-1]:.6f}" if losses else ""
    print(f"{cfg.criterion} fine-tune: {len(losses)} steps{final}")
    print(f"wrote {args.out}")
    return 0


def _build_ilm(args, cfg, params, data_dir):
    if args.ilm == "zero":
        return tilm.zero_encoder_ilm(params, renormalize=True)
    if args.ilm == "mini":
        train = _read_split(data_dir, "train")
        est, _ = tilm.mini_net_ilm(
            params, [u.transcript for u in train], steps=args.mini_steps
        )
        return est
    return tilm.density_ratio_ilm(
        _read_corpus(data_dir), params.config.vocab,
        tilm.DensityRatioConfig(kind="ngram", order=2, delta=cfg.elm_delta),
    )


def cmd_decode(args):
    cfg = _load_config(args)
    params = _load_ckpt(args.ckpt, "model")
    utts = _read_split(args.data, args.split)
    reduction = tdecoder.BlankReduction(
        mode=args.reduce, rho=args.rho, gamma=args.gamma
    )
    beam_cfg = tdecoder.BeamConfig(
        beam_size=cfg.beam_size,
        fusion_mode=args.mode,
        lambda1=args.l1,
        lambda2=args.l2,
        blank_reduction=reduction,
        n_best_out=1,
    )
    elm = None
    if args.mode != "none":
        elm = tpipe.build_elm(cfg, params.config.vocab, _read_corpus(args.data))
    ilm_est = None
    if args.mode in ("sf_ilm", "sf_dr"):
        ilm_est = _build_ilm(args, cfg, params, args.data)
    wer_value, lines = tpipe.decode_utterances(
        params, utts, beam_cfg, elm=elm, ilm=ilm_est
    )
    out = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    print(f"WER [%]: {wer_value:.4f}")
    return 0


def cmd_ilm_ppl(args):
    params = _load_ckpt(args.ckpt, "model")
    dev = _read_split(args.data, "dev")
    transcripts = [u.transcript for u in dev]
    renorm, raw = tpipe.ilm_perplexities(params, transcripts)
    print(f"zero-encoder ILM PPL (renorm): {renorm:.4f}")
    print(f"zero-encoder ILM PPL (raw):    {raw:.4f}")
    if args.mini_steps > 0:
        train = _read_split(args.data, "train")
        est, _ = tilm.mini_net_ilm(
            params, [u.transcript for u in train], steps=args.mini_steps
        )
        print(
            f"mini-net ILM PPL (renorm):     "
            f"{tlm.perplexity(est, transcripts):.4f}"
        )
    return 0


def cmd_swap_eval(args):
    cfg = _load_config(args)
    enc = _load_ckpt(args.encoder_ckpt, "encoder source")
    pj = _load_ckpt(args.predjoint_ckpt, "prediction+joint source")
    swapped = tmodel.swap_components(enc, pj)
    dev = _read_split(args.data, "dev")
    elm = tpipe.build_elm(cfg, swapped.config.vocab, _read_corpus(args.data))
    beam_cfg = tdecoder.BeamConfig(
        beam_size=cfg.beam_size, fusion_mode="sf", lambda1=cfg.swap_lambda1
    )
    wer_value, _ = tpipe.decode_utterances(swapped, dev, beam_cfg, elm=elm)
    print(f"swap WER [%] (SF, l1={cfg.swap_lambda1:.2f}): {wer_value:.4f}")
    return 0


def cmd_tables(args):
    cfg = _load_config(args)
    checkpoints = {}
    for name in ("ce", "mmi", "mbr"):
        path = os.path.join(args.study, f"{name}.tslab")
        if os.path.exists(path):
            checkpoints[name] = tckpt.load_checkpoint(path)
    dataset = tdata.generate_dataset(tpipe.dataset_config(cfg))
    elm = tpipe.build_elm(cfg, dataset.vocab, dataset.lm_corpus)
    bigram = tpipe.build_bigram(cfg, dataset.vocab, dataset.lm_corpus)
    text = ttables.experiment_tables(checkpoints, dataset, cfg, elm, bigram)
    out = os.path.join(args.study, "tables.txt")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(text)
    sys.stdout.write(text)
    print(f"wrote {out}")
    return 0


def cmd_oracle_check(args):
    del args
    failures = 0

    def report(name, ok, detail=""):
        nonlocal failures
        tag = "PASS" if ok else "FAIL"
        suffix = f"  ({detail})" if detail else ""
        print(f"[{tag}] {name}{suffix}")
        failures += 0 if ok else 1

    vocab = tmodel.Vocabulary(("a", "b"))
    cfg = tmodel.ModelConfig(
        vocab=vocab, input_dim=3, encoder_dim=4, pred_dim=4, joint_dim=4
    )
    rng = np.random.default_rng(2024)

    worst = 0.0
    for seed in range(5):
        params = tmodel.init_params(cfg, seed)
        feats = rng.normal(size=(4, 3))
        table = tlattice.posterior_table(params, feats, max_len=4)
        worst = max(worst, abs(sum(np.exp(lp) for lp in table.values()) - 1.0))
    report("posterior mass sums to 1", worst < 1e-9, f"max dev {worst:.2e}")

    worst = 0.0
    for seed in range(10):
        params = tmodel.init_params(cfg, seed + 100)
        feats = rng.normal(size=(4, 3))
        target = ("a", "b")[: seed % 3]
        exact = tlattice.seq_log_prob(params, feats, target)
        brute = tlattice.brute_force_seq_log_prob(params, feats, target)
        worst = max(worst, abs(exact - brute))
    report("lattice DP equals path enumeration", worst < 1e-10,
           f"max diff {worst:.2e}")

    params = tmodel.init_params(cfg, 7)
    params = params.with_flat(
        np.random.default_rng(7).uniform(-0.8, 0.8, params.size)
    )
    batch = [(rng.normal(size=(3, 3)), ("a",)), (rng.normal(size=(4, 3)), ("b", "a"))]
    rep = grad_check(
        lambda flat: tlattice.ce_loss_and_grad(params.with_flat(flat), batch).loss,
        lambda flat: tlattice.ce_loss_and_grad(params.with_flat(flat), batch).grad,
        params.flatten(),
    )
    report("CE gradient matches finite differences",
           rep.max_rel_error < 1e-4, f"max rel {rep.max_rel_error:.2e}")

    elm = tlm.train_ngram([("a", "b"), ("b",), ("a",)], vocab, 2, 0.5)
    feats = rng.normal(size=(4, 3))
    ok = True
    for mode, ilm_est, l2 in (
        ("none", None, 0.0),
        ("sf", None, 0.0),
        ("sf_ilm", tilm.zero_encoder_ilm(params), 0.2),
    ):
        bc = tdecoder.BeamConfig(
            beam_size=200, fusion_mode=mode,
            lambda1=0.0 if mode == "none" else 0.3, lambda2=l2,
        )
        use_elm = None if mode == "none" else elm
        top = tdecoder.beam_search(params, feats, bc, elm=use_elm, ilm=ilm_est)
        oracle, _ = tdecoder.exhaustive_fused_argmax(
            params, feats, bc, elm=use_elm, ilm=ilm_est
        )
        ok = ok and top.hyps[0].labels == oracle
    report("beam search equals exhaustive fused argmax", ok)

    print(f"{failures} failure(s)")
    return 0 if failures == 0 else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="tslab",
        description="Desk-scale neural transducer laboratory.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="flat key=value config file")
        add_config_flags(p, tpipe.ExperimentConfig)
        p.set_defaults(func=func)
        return p

    p = add("gen-data", cmd_gen_data, "generate the synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")

    p = add("train-ce", cmd_train_ce, "train the transducer with cross entropy")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="checkpoint path to write")

    p = add("gen-nbest", cmd_gen_nbest, "decode N-best lists for fine-tuning")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True, help="CE checkpoint")
    p.add_argument("--out", required=True, help="N-best file to write")

    p = add("train-seq", cmd_train_seq, "sequence discriminative fine-tuning")
    p.add_argument("--data", default=None)
    p.add_argument("--ckpt", default=None, help="CE checkpoint")
    p.add_argument("--nbest", default=None, help="frozen N-best file")
    p.add_argument("--out", default=None, help="checkpoint path to write")
    p.add_argument(
        "--table_model", action="store_true",
        help="run the canned table-model exact-MMI convergence demo",
    )

    p = add("decode", cmd_decode, "decode a split and report WER")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", default="dev", choices=("train", "dev"))
    p.add_argument("--mode", default="none", choices=tdecoder.FUSION_MODES)
    p.add_argument("--l1", type=float, default=0.0)
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--reduce", default="off",
                   choices=("off", "linear", "exponential"))
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--ilm", default="zero", choices=("zero", "mini", "dr"))
    p.add_argument("--mini_steps", type=int, default=100)
    p.add_argument("--out", default=None, help="write decode lines here")

    p = add("ilm-ppl", cmd_ilm_ppl, "internal LM perplexities on dev")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--mini_steps", type=int, default=0,
                   help="also train and score a mini-net ILM")

    p = add("swap-eval", cmd_swap_eval, "decode with swapped components")
    p.add_argument("--data", required=True)
    p.add_argument("--encoder_ckpt", required=True)
    p.add_argument("--predjoint_ckpt", required=True)

    p = add("tables", cmd_tables, "render the four report tables")
    p.add_argument("--study", required=True,
                   help="directory holding ce/mmi/mbr checkpoints")

    add("oracle-check", cmd_oracle_check,
        "run the brute-force and gradient oracle suite")

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
