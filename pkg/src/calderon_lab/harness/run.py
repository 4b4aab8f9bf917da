"""Experiment runner: one config in, CSV tables and a metadata file out."""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..besov import Interface, bump, hardy_check, rate_battery, synth_besov, trace_ratios
from ..fem import DtnOracle
from ..geometry import boundary_frame
from ..recon import recover_normal, recover_pipeline, recover_value
from ..singular import HALF_SPACE_C0, c0_constant, c1_constant
from .config import ExperimentConfig
from .records import write_csv

__all__ = ["RunRecord", "run", "trace_battery", "hardy_battery", "rel_error"]


@dataclass
class RunRecord:
    """What a run wrote: file paths, summary rows, config hash and stage timings."""

    out_dir: Path
    files: list[Path] = field(default_factory=list)
    summary: list[tuple] = field(default_factory=list)
    config_hash: str = ""
    timings: dict = field(default_factory=dict)


def rel_error(estimate: float, truth: float) -> float:
    """Relative error, or the absolute error when the truth is zero."""
    err = abs(estimate - truth)
    return err / abs(truth) if truth != 0 else err


def _pmap(func, items, threads):
    if threads <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def trace_battery(count: int, N: int, seed: int) -> list:
    """Synthetic rough functions with smoothness drawn from ``[0.3, 1.2]``."""
    rng = np.random.default_rng(seed)
    s_values = rng.uniform(0.3, 1.2, size=count)
    return [synth_besov(float(s), 2.0, seed * 1000 + i, N=N, n=2) for i, s in enumerate(s_values)]


def hardy_battery(count: int, N: int, seed: int) -> list:
    """Smooth bumps near the box centre; the first two are centred with widths 0.25 and 0.125."""
    rng = np.random.default_rng(seed)
    out = [bump(N, (0.5, 0.5, 0.5), 0.25), bump(N, (0.5, 0.5, 0.5), 0.125)]
    while len(out) < count:
        width = rng.uniform(0.08, 0.35)
        center = 0.5 + rng.uniform(-0.1, 0.1, size=3)
        out.append(bump(N, center, width, amplitude=rng.uniform(0.5, 2.0)))
    return out[:count]


def _recon_setup(cfg: ExperimentConfig):
    domain = cfg.domain()
    gamma = cfg.gamma()
    return domain, gamma, cfg.schedule(), cfg.points(domain)


def _normal_truth(gamma, domain, s):
    return float(gamma.grad_log(domain.point(s)) @ domain.normal(s))


def _run_calibrate(cfg, out, threads, rec):
    domain, _, sched, points = _recon_setup(cfg)

    def one(s):
        frame = boundary_frame(domain, s)
        return [(h, c0_constant(domain, frame, h), c1_constant(domain, frame, h)) for h in sched.hs]

    for i, (s, rows) in enumerate(zip(points, _pmap(one, points, threads))):
        rec.files.append(write_csv(out / f"calibrate_p{i}.csv", "calibrate", rows))
        c0 = rows[-1][1]
        rec.summary.append(("calibrate", s, c0, HALF_SPACE_C0, rel_error(c0, HALF_SPACE_C0)))


def _oracle(cfg, gamma):
    return DtnOracle(gamma, jitter=cfg["gamma.jitter"], seed=cfg.seed)


def _value_rows(rep):
    c = rep.columns
    return list(zip(c["h"], c["q0"], c["c0"], c["rho"]))


def _normal_rows(rep):
    c = rep.columns
    return list(zip(c["h"], c["q1"], c["c0"], c["c1"], c["sigma"]))


def _run_value(cfg, out, threads, rec):
    domain, gamma, sched, points = _recon_setup(cfg)
    oracle = _oracle(cfg, gamma)
    results = _pmap(lambda s: recover_value(oracle, domain, s, sched), points, threads)
    for i, (s, (est, rep)) in enumerate(zip(points, results)):
        rec.files.append(write_csv(out / f"value_p{i}.csv", "value", _value_rows(rep)))
        truth = float(gamma(domain.point(s)))
        rec.summary.append(("value", s, est, truth, rel_error(est, truth)))


def _run_normal(cfg, out, threads, rec):
    if cfg["normal.trace"] == "pipeline":
        return _run_pipeline(cfg, out, threads, rec)
    domain, gamma, sched, points = _recon_setup(cfg)
    oracle = _oracle(cfg, gamma)
    trace = gamma.boundary_trace(domain)
    results = _pmap(lambda s: recover_normal(oracle, domain, s, trace, sched), points, threads)
    for i, (s, (est, rep)) in enumerate(zip(points, results)):
        rec.files.append(write_csv(out / f"normal_p{i}.csv", "normal", _normal_rows(rep)))
        truth = _normal_truth(gamma, domain, s)
        rec.summary.append(("normal", s, est, truth, rel_error(est, truth)))


def _run_pipeline(cfg, out, threads, rec):
    domain, gamma, sched, points = _recon_setup(cfg)
    res = recover_pipeline(_oracle(cfg, gamma), domain, points, sched, samples=cfg["pipeline.samples"])
    for i, s in enumerate(res.points):
        rec.files.append(write_csv(out / f"value_p{i}.csv", "value", _value_rows(res.value_reports[i])))
        rec.files.append(write_csv(out / f"normal_p{i}.csv", "normal", _normal_rows(res.normal_reports[i])))
        vt = float(gamma(domain.point(s)))
        nt = _normal_truth(gamma, domain, s)
        rec.summary.append(("pipeline-value", s, res.values[i], vt, rel_error(res.values[i], vt)))
        rec.summary.append(("pipeline-normal", s, res.normals[i], nt, rel_error(res.normals[i], nt)))


def _interface(cfg):
    return Interface(cfg["interface.height"], cfg["interface.lipschitz"], cfg["interface.teeth"])


def _run_besov_rate(cfg, out, threads, rec):
    s, p, q = cfg["besov.s"], cfg["besov.p"], cfg["besov.q"]
    f = synth_besov(s, p, cfg.seed, N=cfg["besov.N"], n=2)
    iface = _interface(cfg)
    floor = s - 1.0 / p
    for name, squared in (("besov_rate", False), ("squared_rate", True)):
        slopes = rate_battery(f, iface, cfg["besov.points"], seed=cfg.seed, q=q, squared=squared, workers=threads)
        rec.files.append(write_csv(out / f"{name}.csv", "besov-rate", enumerate(slopes.tolist())))
        med = float(np.median(slopes))
        rec.summary.append((name.replace("_", "-"), "median", med, floor, rel_error(med, floor)))


def _run_trace_check(cfg, out, threads, rec):
    lams = cfg["trace.lambdas"]
    iface = _interface(cfg)
    battery = trace_battery(cfg["trace.battery"], cfg["trace.N"], cfg.seed)
    ratios = _pmap(lambda f: trace_ratios(f, iface, lams, 2.0, 2.0), battery, threads)
    worst = {lam: max(r[lam] for r in ratios) for lam in lams}
    rec.files.append(write_csv(out / "trace_check.csv", "trace-check", sorted(worst.items())))
    lo, hi = min(lams), max(lams)
    growth = worst[hi] / worst[lo]
    rec.summary.append(("trace-check", f"{hi}/{lo}", growth, 1.0, rel_error(growth, 1.0)))


def _run_hardy_check(cfg, out, threads, rec):
    battery = hardy_battery(cfg["hardy.battery"], cfg["hardy.N"], cfg.seed)
    ratios = _pmap(hardy_check, battery, threads)
    rec.files.append(write_csv(out / "hardy_check.csv", "hardy-check", enumerate(ratios)))
    worst = max(ratios)
    rec.summary.append(("hardy-check", "max", worst, 4.0, rel_error(worst, 4.0)))


_MODES = {
    "calibrate": _run_calibrate,
    "value": _run_value,
    "normal": _run_normal,
    "pipeline": _run_pipeline,
    "besov-rate": _run_besov_rate,
    "trace-check": _run_trace_check,
    "hardy-check": _run_hardy_check,
}


def run(cfg: ExperimentConfig, out=None, threads: int = 1, test_mode: bool = False) -> RunRecord:
    """Execute ``cfg`` and write its tables to ``out`` (default ``cfg.output_dir``).

    Writes ``summary.csv`` and ``meta.json`` besides the mode tables.  In
    test mode the work runs on one thread and ``meta.json`` carries no
    timings, so repeated runs give identical files.
    """
    out = Path(out) if out is not None else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    threads = 1 if test_mode else max(1, int(threads))
    rec = RunRecord(out, config_hash=cfg.hash())
    t0 = time.perf_counter()
    _MODES[cfg.mode](cfg, out, threads, rec)
    rec.timings[cfg.mode] = time.perf_counter() - t0
    rec.files.append(write_csv(out / "summary.csv", "summary", rec.summary))
    meta = {
        "version": __version__,
        "config_hash": rec.config_hash,
        "mode": cfg.mode,
        "seed": cfg.seed,
        "test_mode": test_mode,
        "config": cfg.canonical(),
    }
    if not test_mode:
        meta["wall_clock_s"] = {k: round(v, 3) for k, v in rec.timings.items()}
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return rec


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    raise TypeError(f"cannot serialise {type(v).__name__}")
