"""
Experiment runner: parses flat key=value configs, executes single runs
and sweeps over seeded points, and emits one CSV row per point.

Example configuration (sweeps are comma lists, grid is the cross
product in key order)::

    architecture = clos_udn
    dispatch = dynamic
    size = 64
    SP = 1,2
    traffic = bernoulli_uniform
    load = 0.1,0.5,0.9,0.99
    slots = 100000
    seed = 7
"""

from __future__ import annotations

import argparse
import math
import multiprocessing
import os
import sys
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import InversionTracker, RunMetrics, finalize
from .baselines import MmmFabric, MsmFabric
from .closudn import ClosUdnFabric
from .core import (
    Architecture,
    ConfigError,
    PacketStore,
    SlotClock,
    SwitchConfig,
    validate,
)
from .traffic import TrafficGenerator, TrafficModel, TrafficKind, validate_model

CSV_COLUMNS = [
    "architecture", "dispatch", "n", "k", "m", "M", "SP", "BD", "iterations",
    "crosspoint_b", "traffic", "load", "omega", "mean_burst", "slots", "seed",
    "throughput", "mean_delay", "ooo_fraction", "dropped",
]

SWEEPABLE = {"load", "omega", "SP", "M", "BD", "iterations", "crosspoint_b",
             "architecture", "dispatch", "size"}

_INT_KEYS = {"n", "k", "m", "M", "SP", "BD", "iterations", "crosspoint_b",
             "slots", "seed", "size", "im_fifo_capacity"}
_FLOAT_KEYS = {"load", "omega", "mean_burst", "warmup"}
_STR_KEYS = {"architecture", "dispatch", "traffic", "mmm_input_policy"}

PROFILES = {
    "ci": {"slots": 100_000, "size": 64},
    "paper": {"slots": 1_000_000, "size": 256},
}


@dataclass
class ExperimentSpec:
    """One experiment: a base configuration plus sweep dimensions."""

    base: dict
    sweep: list = field(default_factory=list)   # (key, [values]) in file order
    slots: int | None = None                    # None: profile default applies
    warmup_frac: float = 0.1
    seed: int = 1
    collect_pop: bool = False


def build_fabric(cfg: SwitchConfig, store: PacketStore, check: bool = False):
    if cfg.architecture == Architecture.CLOS_UDN:
        return ClosUdnFabric(cfg, store=store, check=check)
    if cfg.architecture == Architecture.MSM:
        return MsmFabric(cfg, store=store, check=check)
    return MmmFabric(cfg, store=store, check=check)


def run_single(cfg: SwitchConfig, model: TrafficModel, slots: int,
               warmup_frac: float = 0.1, collect_pop: bool = False,
               check: bool = False) -> dict:
    """Simulate one (config, traffic, seed) point and return its summary."""
    cfg = validate(cfg)
    model = validate_model(model)
    store = PacketStore(cfg.n, cfg.k, cfg.M, recycle=not check)
    fab = build_fabric(cfg, store, check=check)
    rng = np.random.default_rng(cfg.seed)
    gen = TrafficGenerator(model, cfg.n, cfg.k, rng)
    clock = SlotClock(slot=0, warmup_slots=int(slots * warmup_frac), total_slots=slots)
    warmup = clock.warmup_slots
    if hasattr(fab, "measure_from"):
        fab.measure_from = warmup
    metrics = RunMetrics(n=cfg.n, k=cfg.k, warmup_slots=warmup, total_slots=slots)
    tracker = InversionTracker(cfg.N * cfg.N)
    hist = Counter()
    pop_base = None
    Nn = cfg.N
    for slot in range(slots):
        clock.slot = slot
        if slot == warmup and collect_pop and hasattr(fab, "bank"):
            pop_base = fab.bank.pop_east.copy()
        srcs, dsts = gen.generate_slot(slot)
        res = fab.step(slot, srcs, dsts)
        metrics.injected += res.arrivals
        metrics.dropped += res.dropped
        measuring = clock.measuring
        if res.delivered:
            # store columns are re-read per slot: they are replaced when
            # the store grows
            src, dst = store.src, store.dst
            seq, arrival = store.flow_seq, store.arrival
            for pid in res.delivered:
                inv = tracker.record(src[pid] * Nn + dst[pid], seq[pid])
                if measuring:
                    metrics.delivered += 1
                    metrics.delay_sum += slot - arrival[pid]
                    if inv:
                        metrics.ooo_inversions += 1
                store.release(pid)
            if measuring:
                hist.update(
                    (slot - arrival[np.asarray(res.delivered)]).tolist())
    metrics.delay_hist = dict(hist)
    if hasattr(fab, "im_wait_sum"):
        metrics.im_wait_sum = fab.im_wait_sum
        metrics.im_wait_count = fab.im_wait_count
    if collect_pop and hasattr(fab, "bank"):
        metrics.pop_east = fab.bank.pop_east - (pop_base if pop_base is not None else 0)
    summary = finalize(metrics)
    summary["total_inversions"] = tracker.inversions
    return summary


# ---- configuration parsing ----

def _convert(key: str, raw: str):
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    if key in _STR_KEYS:
        return raw
    raise ConfigError([f"unknown configuration key {key!r}"])


def parse_config(text: str) -> ExperimentSpec:
    """Parse flat ``key = value`` lines; comma lists on sweepable keys
    become sweep dimensions in order of appearance."""
    base: dict = {}
    sweep: list = []
    errors: list[str] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected key = value")
            continue
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        try:
            if "," in raw:
                if key not in SWEEPABLE:
                    errors.append(f"line {lineno}: key {key!r} is not sweepable")
                    continue
                sweep.append((key, [_convert(key, v.strip()) for v in raw.split(",")]))
            else:
                base[key] = _convert(key, raw)
        except ConfigError as exc:
            errors.extend(f"line {lineno}: {e}" for e in exc.errors)
        except ValueError:
            errors.append(f"line {lineno}: cannot parse value {raw!r} for {key!r}")
    if "size" in base and ("n" in base or "k" in base):
        errors.append("size conflicts with explicit n/k")
    if errors:
        raise ConfigError(errors)
    spec = ExperimentSpec(base=base, sweep=sweep)
    if "slots" in base:
        spec.slots = base.pop("slots")
    if "warmup" in base:
        spec.warmup_frac = base.pop("warmup")
    if "seed" in base:
        spec.seed = base.pop("seed")
    return spec


def _apply_size(point: dict) -> dict:
    if "size" in point:
        size = point.pop("size")
        side = math.isqrt(size)
        if side * side != size:
            raise ConfigError([f"size {size} is not a perfect square (need n = k)"])
        point["n"] = side
        point["k"] = side
    return point


def expand_points(spec: ExperimentSpec) -> list[dict]:
    """Cross product of sweep values; each point carries a derived seed."""
    points = [dict(spec.base)]
    for key, values in spec.sweep:
        points = [dict(p, **{key: v}) for p in points for v in values]
    out = []
    for idx, p in enumerate(points):
        p = _apply_size(dict(p))
        p["seed"] = spec.seed + idx
        out.append(p)
    return out


def point_to_config(point: dict) -> tuple[SwitchConfig, TrafficModel]:
    cfg_keys = {f for f in SwitchConfig.__dataclass_fields__}
    cfg = SwitchConfig(**{k: v for k, v in point.items() if k in cfg_keys})
    model = TrafficModel(
        kind=TrafficKind(point.get("traffic", "bernoulli_uniform")),
        load=point.get("load", 0.5),
        omega=point.get("omega", 0.0),
        mean_burst=point.get("mean_burst", 10.0),
    )
    return validate(cfg), validate_model(model)


def _format(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.6g}"
    return str(value)


def _run_point(args) -> tuple[dict, object]:
    point, slots, warmup_frac, collect_pop = args
    cfg, model = point_to_config(point)
    summary = run_single(cfg, model, slots, warmup_frac, collect_pop=collect_pop)
    row = {
        "architecture": cfg.architecture.value,
        "dispatch": cfg.dispatch.value,
        "n": cfg.n, "k": cfg.k, "m": cfg.m, "M": cfg.M,
        "SP": cfg.SP, "BD": cfg.BD, "iterations": cfg.iterations,
        "crosspoint_b": cfg.crosspoint_b,
        "traffic": model.kind.value,
        "load": model.load, "omega": model.omega, "mean_burst": model.mean_burst,
        "slots": slots, "seed": cfg.seed,
        "throughput": summary["throughput"],
        "mean_delay": summary["mean_delay"],
        "ooo_fraction": summary["ooo_fraction"],
        "dropped": summary["dropped"],
    }
    return row, summary.get("pop_east_proportions")


def run(spec: ExperimentSpec, out_path: str, pop_path: str | None = None,
        parallel: int = 1) -> int:
    """Execute every sweep point, appending one CSV row per point.

    Existing rows in ``out_path`` are treated as completed points and
    skipped, so an interrupted sweep resumes where it stopped.
    """
    points = expand_points(spec)
    slots = spec.slots if spec.slots is not None else PROFILES["ci"]["slots"]
    done = 0
    header_needed = True
    if os.path.exists(out_path):
        with open(out_path) as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
        if lines and lines[0] == ",".join(CSV_COLUMNS):
            done = len(lines) - 1
            header_needed = False
    todo = points[done:]
    jobs = [(p, slots, spec.warmup_frac, spec.collect_pop or bool(pop_path))
            for p in todo]
    pop_rows = []
    with open(out_path, "a") as out:
        if header_needed:
            out.write(",".join(CSV_COLUMNS) + "\n")
            out.flush()
        if parallel > 1 and len(jobs) > 1:
            with multiprocessing.Pool(parallel) as pool:
                results = pool.imap(_run_point, jobs)
                for idx, (row, pop) in enumerate(results):
                    out.write(",".join(_format(row[c]) for c in CSV_COLUMNS) + "\n")
                    out.flush()
                    if pop is not None:
                        pop_rows.append((done + idx, pop))
        else:
            for idx, job in enumerate(jobs):
                row, pop = _run_point(job)
                out.write(",".join(_format(row[c]) for c in CSV_COLUMNS) + "\n")
                out.flush()
                if pop is not None:
                    pop_rows.append((done + idx, pop))
    if pop_path and pop_rows:
        with open(pop_path, "a" if done else "w") as fh:
            if not done:
                fh.write("point,mesh,row,col,proportion\n")
            for point_idx, pop in pop_rows:
                m, k, links = pop.shape
                for mi in range(m):
                    for ki in range(k):
                        for ci in range(links):
                            fh.write(f"{point_idx},{mi},{ki},{ci},{pop[mi, ki, ci]:.6g}\n")
    return len(todo)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="closfab",
        description="Slot-synchronous simulator for multistage Clos switch fabrics.")
    parser.add_argument("--config", required=True, help="key = value experiment file")
    parser.add_argument("--out", default="experiment.csv", help="CSV output path")
    parser.add_argument("--slots", type=int, help="override total slots")
    parser.add_argument("--seed", type=int, help="override base seed")
    parser.add_argument("--parallel", type=int, default=1, help="worker processes")
    parser.add_argument("--profile", choices=sorted(PROFILES), default="ci",
                        help="default slots/size profile")
    parser.add_argument("--pop-east", dest="pop_east", default=None,
                        help="sidecar CSV for east-link packet proportions")
    args = parser.parse_args(argv)

    try:
        with open(args.config) as fh:
            spec = parse_config(fh.read())
        profile = PROFILES[args.profile]
        if spec.slots is None:
            spec.slots = profile["slots"]
        if ("size" not in spec.base and "n" not in spec.base
                and not any(k == "size" for k, _ in spec.sweep)):
            spec.base["size"] = profile["size"]
        if args.slots is not None:
            spec.slots = args.slots
        if args.seed is not None:
            spec.seed = args.seed
        # validate every point up front so errors are complete
        errors = []
        for point in expand_points(spec):
            try:
                point_to_config(point)
            except ConfigError as exc:
                errors.extend(exc.errors)
        if errors:
            raise ConfigError(sorted(set(errors)))
        ran = run(spec, args.out, pop_path=args.pop_east, parallel=args.parallel)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {ran} row(s) to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
