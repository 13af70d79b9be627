"""Run the decoder comparison grid and print the result tables.

    python scripts/run_pipeline.py                       # default 200-reach config
    python scripts/run_pipeline.py --config scripts/example_config.json
"""

import argparse
import logging
import time

from evdecode.config import PipelineConfig, load_config
from evdecode.pipeline import run_pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON config; defaults are used when omitted")
    ap.add_argument("--output-dir")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.output_dir:
        cfg.output_dir = args.output_dir
    t0 = time.perf_counter()
    run_pipeline(cfg)
    print((cfg.output_path() / "tables.md").read_text())
    print(f"finished in {time.perf_counter() - t0:.0f} s, artifacts in {cfg.output_path()}")


if __name__ == "__main__":
    main()
