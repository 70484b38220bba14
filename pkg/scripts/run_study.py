#!/usr/bin/env python3
"""Run one full study: data, CE training, MMI and MBR fine-tuning,
fusion sweeps, ILM perplexities, and the four report tables.

Every experiment-config key is exposed as a flag and may also come from
a flat key = value file via --config (flags win).  Artifacts land in
--out: train/dev datasets, LM corpus, ce/mmi/mbr checkpoints, the frozen
N-best file, results.jsonl, and tables.txt.

Example:
    python scripts/run_study.py --out runs/seed0 --seed 0
    python scripts/run_study.py --out runs/quick --config configs/quick.cfg
"""

import argparse
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from tslab import pipeline as tpipe
from tslab.config import (
    add_config_flags,
    build_config,
    flag_overrides,
    parse_config_file,
)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--config", default=None, help="flat key=value config file")
    add_config_flags(parser, tpipe.ExperimentConfig)
    args = parser.parse_args(argv)

    file_values = parse_config_file(args.config) if args.config else None
    overrides = flag_overrides(args, tpipe.ExperimentConfig)
    cfg = build_config(tpipe.ExperimentConfig, file_values, overrides)

    start = time.time()
    result = tpipe.run_study(cfg, args.out)
    elapsed = time.time() - start

    print(result.tables_text)
    print(f"{len(result.records)} records -> {os.path.join(args.out, 'results.jsonl')}")
    print(f"done in {elapsed:.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
