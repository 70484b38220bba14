"""Decode sweeps and the four experiment report tables.

Sweeps evaluate each checkpoint on the dev split across the configured
fusion grids; the report then shows, per training criterion, the best
dev WER by fusion mode (T1), the fusion parameters that achieved it
(T2), zero-encoder ILM perplexities with and without renormalization
(T3), and the WER matrix of all encoder x prediction+joint swap
combinations under shallow fusion (T4).
"""

from tslab import decoder as tdecoder
from tslab import ilm as tilm
from tslab import model as tmodel
from tslab import pipeline as tpipe

MODES = ("none", "sf", "sf_dr", "sf_ilm", "sf_reduce_blank")
MODEL_ORDER = ("ce", "mmi", "mbr")


def _model_names(checkpoints):
    names = [n for n in MODEL_ORDER if n in checkpoints]
    names += sorted(n for n in checkpoints if n not in MODEL_ORDER)
    return names


def _dr_estimate(dataset, cfg):
    return tilm.density_ratio_ilm(
        dataset.lm_corpus, dataset.vocab,
        tilm.DensityRatioConfig(kind="ngram", order=2, delta=cfg.elm_delta),
    )


def sweep_points(cfg, mode):
    """(description, lambda1, lambda2, reduction) tuples, in grid order."""
    l1s = tpipe.parse_grid(cfg.lambda1_grid)
    l2s = tpipe.parse_grid(cfg.lambda2_grid)
    off = tdecoder.BlankReduction()
    if mode == "none":
        return [("none", 0.0, 0.0, off)]
    if mode == "sf":
        return [(f"l1={l1:.2f}", l1, 0.0, off) for l1 in l1s]
    if mode in ("sf_ilm", "sf_dr"):
        return [
            (f"l1={l1:.2f}/l2={l2:.2f}", l1, l2, off)
            for l1 in l1s
            for l2 in l2s
        ]
    points = []
    for rho in tpipe.parse_grid(cfg.reduce_rho_grid):
        red = tdecoder.BlankReduction("linear", rho=rho)
        points.extend(
            (f"linear/rho={rho:.2f}/l1={l1:.2f}", l1, 0.0, red) for l1 in l1s
        )
    for gamma in tpipe.parse_grid(cfg.reduce_gamma_grid):
        red = tdecoder.BlankReduction("exponential", gamma=gamma)
        points.extend(
            (f"exponential/gamma={gamma:.2f}/l1={l1:.2f}", l1, 0.0, red)
            for l1 in l1s
        )
    return points


def decode_sweeps(checkpoints, dataset, cfg, elm, bigram, record=None,
                  modes=MODES):
    """Dev WER for every sweep point of every checkpoint.

    Returns (records, best) where best[(model, mode)] =
    (wer, description).  Ties keep the earliest grid point.
    """
    del bigram  # the density-ratio estimate is retrained from the corpus
    dr = _dr_estimate(dataset, cfg) if "sf_dr" in modes else None
    records = []
    best = {}
    for name in _model_names(checkpoints):
        params = checkpoints[name]
        zero_ilm = tilm.zero_encoder_ilm(params, renormalize=True)
        for mode in modes:
            ilm_est = {"sf_ilm": zero_ilm, "sf_dr": dr}.get(mode)
            for desc, l1, l2, red in sweep_points(cfg, mode):
                beam_cfg = tdecoder.BeamConfig(
                    beam_size=cfg.beam_size,
                    fusion_mode=mode,
                    lambda1=l1,
                    lambda2=l2,
                    blank_reduction=red,
                )
                wer_value, _ = tpipe.decode_utterances(
                    params, dataset.dev, beam_cfg,
                    elm=None if mode == "none" else elm,
                    ilm=ilm_est,
                )
                point = mode if mode == "none" else f"{mode}/{desc}"
                if record is not None:
                    records.append(
                        record(f"wer/{name}/{point}", "dev", wer_value)
                    )
                key = (name, mode)
                if key not in best or wer_value < best[key][0]:
                    best[key] = (wer_value, desc)
            if record is not None:
                records.append(
                    record(
                        f"wer_best/{name}/{mode}", "dev", best[(name, mode)][0]
                    )
                )
    return records, best


def _render(title, header, rows):
    table = [header] + rows
    widths = [
        max(len(str(row[i])) for row in table) for i in range(len(header))
    ]
    lines = [title]
    for r, row in enumerate(table):
        lines.append(
            "  ".join(str(cell).ljust(widths[i]) for i, cell in enumerate(row))
        )
        if r == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def experiment_tables(checkpoints, dataset, cfg, elm, bigram, best=None):
    """The four report tables as aligned plain text."""
    for required in ("ce", "mmi", "mbr"):
        if required not in checkpoints:
            raise ValueError(f"missing checkpoint {required!r} for tables")
    if best is None:
        _, best = decode_sweeps(checkpoints, dataset, cfg, elm, bigram)
    models = [n for n in MODEL_ORDER if n in checkpoints]

    rows1, rows2 = [], []
    for mode in MODES:
        rows1.append(
            [mode] + [f"{best[(m, mode)][0]:.2f}" for m in models]
        )
        rows2.append([mode] + [best[(m, mode)][1] for m in models])
    t1 = _render(
        "T1: dev WER [%] by fusion mode (best over the sweep grids)",
        ["mode"] + models, rows1,
    )
    t2 = _render(
        "T2: fusion parameters selected on dev", ["mode"] + models, rows2
    )

    transcripts = [u.transcript for u in dataset.dev]
    ppls = {m: tpipe.ilm_perplexities(checkpoints[m], transcripts) for m in models}
    rows3 = [
        ["renorm"] + [f"{ppls[m][0]:.3f}" for m in models],
        ["raw"] + [f"{ppls[m][1]:.3f}" for m in models],
    ]
    t3 = _render(
        "T3: zero-encoder ILM perplexity on dev transcripts",
        ["variant"] + models, rows3,
    )

    beam_cfg = tdecoder.BeamConfig(
        beam_size=cfg.beam_size, fusion_mode="sf", lambda1=cfg.swap_lambda1
    )
    rows4 = []
    for enc_name in models:
        row = [f"enc={enc_name}"]
        for pj_name in models:
            swapped = tmodel.swap_components(
                checkpoints[enc_name], checkpoints[pj_name]
            )
            wer_value, _ = tpipe.decode_utterances(
                swapped, dataset.dev, beam_cfg, elm=elm
            )
            row.append(f"{wer_value:.2f}")
        rows4.append(row)
    t4 = _render(
        f"T4: dev WER [%] for encoder x prediction+joint swaps "
        f"(SF, l1={cfg.swap_lambda1:.2f})",
        ["encoder \\ pred+joint"] + [f"pj={m}" for m in models], rows4,
    )
    return "\n".join([t1, t2, t3, t4])
