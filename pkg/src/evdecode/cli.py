"""Command-line entry point (``evdecode <subcommand>``).

Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import evfilter, synth
from .config import OUTPUT_ROOT_ENV, load_config, validate_config
from .decoders import TrainConfig, load_model, predict, save_model, train
from .errors import ConfigError, EvdecodeError
from .events import read_events, stream_stats, write_events
from .features import FeatureConfig, featurize, read_features, split_reaches, spike_train_to_stream, write_features
from .metrics import r2_xy

MODEL_NAMES = {"nn": "NN", "stnn": "ST_NN", "lstm": "LSTM", "snn": "SNN", "linear": "LINEAR"}


def _fmt(path: str) -> str:
    return "csv" if str(path).endswith(".csv") else "binary"


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_synth(args):
    from .config import PipelineConfig

    cfg = load_config(args.config) if args.config else PipelineConfig()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    s = cfg.synth
    traj = synth.gen_reaches(s.n_reaches, s.sample_period_us, s.workspace, cfg.seeds["synth"], s.reach_ms, s.hold_ms)
    tuning = synth.random_tuning(s.n_channels, cfg.seeds["synth"], s.baseline_hz, s.depth_hz)
    spikes = synth.gen_spikes(traj, tuning, cfg.seeds["synth"], lead_ms=s.lead_ms)
    synth.write_trajectory(traj, out / "trajectory.csv")
    write_events(spike_train_to_stream(spikes), out / "gt_spikes.nevt")
    _print({"reaches": traj.n_reaches, "duration_us": traj.duration_us, "spikes": len(spikes), "config_hash": cfg.hash()})


def cmd_encode(args):
    from .config import PipelineConfig

    cfg = load_config(args.config) if args.config else PipelineConfig()
    gt = read_events(args.spikes, _fmt(args.spikes))
    times = [gt.timestamp_us[gt.channel == c].astype("int64") for c in range(gt.n_channels)]
    train_ = synth.SpikeTrain(gt.n_channels, times, gt.duration_us)
    e = cfg.encoder
    params = synth.EncoderParams(e.delta, e.spike_amplitude, e.noise_std, e.sample_rate_hz)
    raw = synth.encode_spike_train(train_, params, cfg.seeds["encode"], duration_us=gt.duration_us)
    write_events(raw, args.out, _fmt(args.out))
    _print(_stats(raw))


def _stats(stream):
    s = stream_stats(stream)
    return {"total": s["total"], "rate_hz": s["rate_hz"]}


def cmd_filter(args, force_tref=None):
    t_ref = force_tref if force_tref is not None else args.tref_us
    raw = read_events(args.inp, _fmt(args.inp))
    params = evfilter.FilterParams(args.nth, args.tau_us, t_ref)
    out = evfilter.filter_events(raw, params)
    write_events(out, args.out, _fmt(args.out))
    ratio = evfilter.compression_ratio(raw, out)
    stats = {"raw": len(raw), "filtered": len(out), "ratio": "inf" if ratio == float("inf") else ratio,
             "n_th": args.nth, "tau_us": args.tau_us, "t_ref_us": t_ref}
    if args.stats:
        Path(args.stats).write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    _print(stats)


def cmd_featurize(args):
    stream = read_events(args.events, _fmt(args.events))
    traj = synth.read_trajectory(args.trajectory)
    cfg = FeatureConfig(args.tbin_ms, args.ts_ms, args.segments, args.mode)
    ff = featurize(stream, traj, cfg)
    write_features(ff, args.out)
    _print({"samples": len(ff), "features": ff.n_features, "mode": cfg.mode})


def _split_for(ff):
    return split_reaches(int(ff.reach_ids.max()) + 1)


def cmd_train(args):
    kind = MODEL_NAMES[args.model]
    ff = read_features(args.features)
    cfg = TrainConfig(epochs=args.epochs, lr=args.lr, weight_decay=args.weight_decay)
    model, history = train(kind, ff, _split_for(ff), cfg, args.seed)
    save_model(model, args.out)
    _print({"model": kind, "best_val_r2": max(h["val_r2"] for h in history), "epochs": len(history)})


def cmd_eval(args):
    model = load_model(args.model_file)
    ff = read_features(args.features)
    part = ff.subset(_split_for(ff).mask(ff.reach_ids, args.part)) if args.part != "all" else ff
    rx, ry, rm = r2_xy(part.Y, predict(model, part))
    _print({"r2_x": rx, "r2_y": ry, "r2_mean": rm, "samples": len(part)})


def cmd_bench(args):
    from .bench import report

    model = load_model(args.model_file)
    ff = read_features(args.features)
    part = ff.subset(_split_for(ff).mask(ff.reach_ids, args.part)) if args.part != "all" else ff
    rep = report(model, part).to_dict()
    doc = {"decoder": model.kind, "metrics": rep,
           "provenance": {"config_hash": model.meta.get("config_hash", ff.config_hash),
                          "seed": model.meta.get("train", {}).get("seed")}}
    Path(args.report).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _print(doc)


def cmd_pipeline(args):
    from .pipeline import run_pipeline

    cfg = load_config(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    summary = run_pipeline(cfg)
    _print({"table1": summary["table1"], "compression_ratio": summary["compression_ratio"],
            "output_dir": str(cfg.output_path())})


def cmd_validate(args):
    cfg = load_config(args.config)
    problems = validate_config(cfg)
    _print({"valid": not problems, "violations": problems, "config_hash": cfg.hash()})
    if problems:
        raise ConfigError(f"{len(problems)} violation(s)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evdecode", description=__doc__.splitlines()[0],
                                epilog=f"Set {OUTPUT_ROOT_ENV} to relocate relative pipeline output directories.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("synth", help="generate reach kinematics and ground-truth spikes")
    s.add_argument("--config")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("encode", help="waveform + delta-modulation events from a spike file")
    s.add_argument("--config")
    s.add_argument("--spikes", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_encode)

    for name in ("filter", "detect"):
        s = sub.add_parser(name, help="event filter" if name == "filter" else "spike detector (t_ref forced to 1 ms)")
        s.add_argument("--nth", type=int, default=2)
        s.add_argument("--tau-us", type=int, default=500)
        if name == "filter":
            s.add_argument("--tref-us", type=int, default=0)
        s.add_argument("--in", dest="inp", required=True)
        s.add_argument("--out", required=True)
        s.add_argument("--stats", help="also write the stats JSON here")
        if name == "filter":
            s.set_defaults(func=cmd_filter)
        else:
            s.set_defaults(func=lambda a: cmd_filter(a, force_tref=evfilter.SPD_REFRACTORY_US))

    s = sub.add_parser("featurize", help="events + trajectory -> feature file")
    s.add_argument("--mode", choices=["frame", "segmented", "binary"], default="frame")
    s.add_argument("--tbin-ms", type=int, default=200)
    s.add_argument("--ts-ms", type=int, default=4)
    s.add_argument("--segments", type=int, default=1)
    s.add_argument("--events", required=True)
    s.add_argument("--trajectory", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_featurize)

    s = sub.add_parser("train", help="train one decoder on a feature file")
    s.add_argument("--model", choices=sorted(MODEL_NAMES), required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--split-seed", type=int, default=0, help="accepted for completeness; the split is chronological")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epochs", type=int, default=50)
    s.add_argument("--lr", type=float, default=0.005)
    s.add_argument("--weight-decay", type=float, default=0.05)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    for name, func in (("eval", cmd_eval), ("bench", cmd_bench)):
        s = sub.add_parser(name)
        s.add_argument("--model-file", required=True)
        s.add_argument("--features", required=True)
        s.add_argument("--part", choices=["train", "val", "test", "all"], default="test")
        if name == "bench":
            s.add_argument("--report", required=True)
        s.set_defaults(func=func)

    s = sub.add_parser("pipeline", help="run the full comparison grid from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--output-dir")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("validate", help="list every problem in a config file")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except EvdecodeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
