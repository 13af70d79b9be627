"""End-to-end run: synthesize (or load) -> encode -> filter -> featurize -> train -> evaluate -> bench.

Artifacts are written under the config's output directory. Each file is first
written with a ``.partial`` suffix and renamed once complete, so a crashed
stage leaves only ``.partial`` files behind.
"""

from __future__ import annotations

import json
import logging
import math
import os
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import evfilter, synth
from .bench import report
from .config import PipelineConfig, validate_config
from .decoders import KINDS, save_model, train
from .errors import ConfigError, EvdecodeError
from .events import EventStream, read_events, stream_stats, write_events
from .features import featurize, segment_and_split, spike_train_to_stream, write_features
from .synth import read_trajectory, write_trajectory

log = logging.getLogger(__name__)


class StageError(EvdecodeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)


@contextmanager
def stage(name: str):
    log.info("stage %s", name)
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


@contextmanager
def atomic(path: Path):
    """Yield a ``.partial`` path, renamed to ``path`` on success."""
    tmp = path.with_name(path.name + ".partial")
    yield tmp
    os.replace(tmp, path)


def dump_json(obj, path: Path) -> None:
    with atomic(path) as tmp:
        tmp.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o))


def cell_seed(base: int, kind: str, variant: str) -> int:
    from .config import VARIANTS

    ss = np.random.SeedSequence([base, KINDS.index(kind), VARIANTS.index(variant)])
    return int(ss.generate_state(1)[0])


def write_stream(stream: EventStream, path: Path, config_hash: str) -> None:
    with atomic(path) as tmp:
        write_events(stream, tmp)
    dump_json({"config_hash": config_hash, **{k: v for k, v in stream_stats(stream).items() if k != "per_channel"}},
              path.with_name(path.name + ".json"))


def generate(cfg: PipelineConfig):
    """Synthetic trajectory, GT spike train and raw front-end events."""
    s, e = cfg.synth, cfg.encoder
    traj = synth.gen_reaches(s.n_reaches, s.sample_period_us, s.workspace, cfg.seeds["synth"], s.reach_ms, s.hold_ms)
    tuning = synth.random_tuning(s.n_channels, cfg.seeds["synth"], s.baseline_hz, s.depth_hz)
    spikes = synth.gen_spikes(traj, tuning, cfg.seeds["synth"], lead_ms=s.lead_ms)
    params = synth.EncoderParams(e.delta, e.spike_amplitude, e.noise_std, e.sample_rate_hz)
    raw = synth.encode_spike_train(spikes, params, cfg.seeds["encode"], duration_us=traj.duration_us)
    return traj, spike_train_to_stream(spikes), raw


def load_external(cfg: PipelineConfig):
    d = cfg.data
    raw = read_events(d.events, d.events_format)
    traj = read_trajectory(d.trajectory)
    gt = read_events(d.spikes, d.events_format) if d.spikes else None
    return traj, gt, raw


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run every (decoder, input variant) cell; returns the summary written to ``summary.json``."""
    problems = validate_config(cfg)
    if problems:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))
    h = cfg.hash()
    out = cfg.output_path()
    for sub in ("", "features", "models", "reports"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    dump_json({"config_hash": h, "config": cfg.to_dict()}, out / "config.json")

    with stage("synth" if cfg.data.events is None else "load"):
        traj, gt, raw = generate(cfg) if cfg.data.events is None else load_external(cfg)
        with atomic(out / "trajectory.csv") as tmp:
            write_trajectory(traj, tmp)
        dump_json({"config_hash": h, "n_samples": traj.n_samples, "n_reaches": traj.n_reaches},
                  out / "trajectory.csv.json")
        write_stream(raw, out / "raw_events.nevt", h)
        if gt is not None:
            write_stream(gt, out / "gt_spikes.nevt", h)

    streams = {}
    ratios = {}
    with stage("filter"):
        f = cfg.filter
        if "gt" in cfg.inputs:
            streams["gt"] = gt
        if "evfilter" in cfg.inputs:
            streams["evfilter"] = evfilter.filter_events(raw, evfilter.FilterParams(f.n_th, f.tau_us, f.t_ref_us))
        if "spd" in cfg.inputs:
            streams["spd"] = evfilter.filter_events(raw, evfilter.FilterParams(f.n_th, f.tau_us, f.spd_t_ref_us))
        for v in ("evfilter", "spd"):
            if v in streams:
                write_stream(streams[v], out / f"{v}_events.nevt", h)
                ratios[v] = evfilter.compression_ratio(raw, streams[v])

    split = segment_and_split(traj, cfg.seeds["split"])
    cells = {}
    for variant in cfg.inputs:
        for kind in cfg.decoders:
            name = f"{variant}_{kind}"
            with stage(f"featurize:{name}"):
                ff = featurize(streams[variant], traj, cfg.features[kind])
                ff.config_hash = h
                with atomic(out / "features" / f"{name}.nfea") as tmp:
                    write_features(ff, tmp)
            with stage(f"train:{name}"):
                seed = cell_seed(cfg.seeds["train"], kind, variant)
                model, history = train(kind, ff, split, cfg.train, seed)
                model.meta["config_hash"] = h
                with atomic(out / "models" / f"{name}.ndec") as tmp:
                    save_model(model, tmp)
            with stage(f"bench:{name}"):
                test = ff.subset(split.mask(ff.reach_ids, "test"))
                rep = report(model, test, compression_ratio=ratios.get(variant))
                doc = {
                    "decoder": kind,
                    "input": variant,
                    "metrics": rep.to_dict(),
                    "features": cfg.features[kind].__dict__,
                    "history": history,
                    "provenance": {"config_hash": h, "seed": seed},
                }
                dump_json(doc, out / "reports" / f"{name}.json")
            cells[name] = rep.to_dict()

    summary = {
        "config_hash": h,
        "events": {"raw": len(raw), **{v: len(s) for v, s in streams.items() if s is not None}},
        "compression_ratio": {k: ("inf" if math.isinf(r) else r) for k, r in ratios.items()},
        "split": {"train": len(split.train), "val": len(split.val), "test": len(split.test)},
        "table1": {k: {v: cells[f"{v}_{k}"]["r2_mean"] for v in cfg.inputs} for k in cfg.decoders},
        "table2": {
            k: {
                v: {m: cells[f"{v}_{k}"][m] for m in
                    ("activation_sparsity", "macs_per_inference", "acs_per_inference", "memory_kb_per_inference")}
                for v in cfg.inputs
            } | {"model_size_kb": cells[f"{cfg.inputs[0]}_{k}"]["model_size_kb"]}
            for k in cfg.decoders
        },
    }
    dump_json(summary, out / "summary.json")
    with atomic(out / "tables.md") as tmp:
        tmp.write_text(format_tables(summary, cfg))
    return summary


def format_tables(summary: dict, cfg: PipelineConfig) -> str:
    lines = [f"config hash: `{summary['config_hash']}`", "", "# Decoding (test R2, mean of x/y)", "", "| decoder | T_bin (ms) | " + " | ".join(cfg.inputs) + " |",
             "|---|---|" + "---|" * len(cfg.inputs)]
    for k in cfg.decoders:
        tb = "stream" if k == "SNN" else str(cfg.features[k].t_bin_ms)
        lines.append(f"| {k} | {tb} | " + " | ".join(f"{summary['table1'][k][v]:.4f}" for v in cfg.inputs) + " |")
    lines += ["", "# Resources per inference", "",
              "| decoder | input | sparsity | MACs | ACs | memory (Kb) | model size (KB) |",
              "|---|---|---|---|---|---|---|"]
    for k in cfg.decoders:
        t2 = summary["table2"][k]
        for v in cfg.inputs:
            c = t2[v]
            lines.append(
                f"| {k} | {v} | {c['activation_sparsity']:.4f} | {c['macs_per_inference']:.3f} | "
                f"{c['acs_per_inference']:.3f} | {c['memory_kb_per_inference']:.3f} | {t2['model_size_kb']:.3f} |"
            )
    if summary["compression_ratio"]:
        lines += ["", "# Event compression (raw / filtered)", ""]
        lines += [f"- {k}: {r if isinstance(r, str) else f'{r:.1f}'}x" for k, r in summary["compression_ratio"].items()]
    return "\n".join(lines) + "\n"
