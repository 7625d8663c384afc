"""End-to-end memory-experiment runs driven by a JSON config.

Stages (each a subcommand, ``run`` does all of them in order)::

    layout -> build -> calibrate-gmm -> sample -> decode -> fit -> sweep-cutoff -> report

Every stage reads its inputs from, and writes its outputs to, the run
directory, so a stage can be rerun on its own.  All randomness derives
from the config seed and the job name, so two runs of the same config give
byte-identical summaries regardless of the worker count.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .analysis import (
    CurvePoint, FitError, MemoryCurve, PointOutcomes, curves_to_csv, fit_abort, fit_logical, improvement,
    summary_json, sweep_cutoff, tradeoff_to_csv,
)
from .circuit import CircuitProgram, build_memory_circuit, program_from_text, program_to_text
from .decoder import MatchingGraph, SoftConfig, data_measurements, decode_batch, measurement_posteriors
from .detectors import compile_dem, dem_to_text, discover_detectors
from .gmm import GMMSet, ReweightError, assignment_error, fit, reweight, synthetic_truth
from .layout import (
    CODE_KINDS, build_lattice, build_patch, build_schedule, patch_from_json, patch_to_json, schedule_from_json,
    schedule_to_json,
)
from .noise import (
    CalibrationSnapshot, LeakageParams, NoiseModel, from_snapshot, inhomogeneous_model, load_characterised,
    snapshot_from_model, uniform_model, with_readout_error,
)
from .sampler import ShotBatch, generate_calibration, sample

__all__ = ["RunConfig", "DecoderSpec", "ConfigError", "StageError", "run", "main", "DEFAULT_T", "BASELINES"]

DEFAULT_T = (0, 1, 2, 4, 6, 8, 10, 12, 15, 20, 30)
BASELINES = ("calibration-global", "calibration-per-qubit", "characterised-hard", "characterised-soft+PS")
STAGES = ("layout", "build", "calibrate-gmm", "sample", "decode", "fit", "sweep-cutoff", "report")
DEFAULT_CUTOFFS = (0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 1.0)
_TAG = {"0": "0", "1": "1", "+": "p", "-": "m"}


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class DecoderSpec:
    name: str
    model: object = "truth"  # "truth" or a noise spec
    variant: str = "hard"
    cutoff: float | None = None
    bp_iters: int | None = None

    @property
    def soft(self) -> SoftConfig:
        return SoftConfig(self.variant, self.cutoff)


def _default_decoders(with_iq: bool) -> list[DecoderSpec]:
    out = [DecoderSpec("characterised-hard")]
    if with_iq:
        out.append(DecoderSpec("characterised-soft+PS", variant="soft", cutoff=0.5))
    return out


@dataclass
class RunConfig:
    code: str = "dynamic-compass"
    d: int = 3
    anchor: int = 46
    bases: list = field(default_factory=lambda: ["Z", "X"])
    states: list | None = None
    T: list = field(default_factory=lambda: list(DEFAULT_T))
    noise: dict = field(default_factory=lambda: {"kind": "uniform", "p": 1e-3})
    leakage: dict | None = None
    gmm: dict | None = field(default_factory=dict)
    calibration_shots: int = 4000
    reweight: bool = False
    readout_from_gmm: bool = True
    shots: int = 1000
    decoders: list = field(default_factory=list)
    baseline: str | None = None
    sweep_decoder: str | None = None
    cutoffs: list = field(default_factory=lambda: list(DEFAULT_CUTOFFS))
    bootstrap: int = 1000
    seed: int = 0
    out: str = "run"
    base_dir: str = field(default=".", repr=False)

    @classmethod
    def from_dict(cls, d: dict, base_dir: str = ".") -> "RunConfig":
        known = {f.name for f in fields(cls)} - {"base_dir"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        kw = dict(d)
        decs = kw.pop("decoders", None)
        cfg = cls(**kw, base_dir=base_dir)
        if decs is None or not decs:
            cfg.decoders = _default_decoders(cfg.gmm is not None)
        else:
            try:
                cfg.decoders = [x if isinstance(x, DecoderSpec) else DecoderSpec(**x) for x in decs]
            except TypeError as exc:
                raise ConfigError(f"bad decoder entry: {exc}") from None
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(d, os.path.dirname(os.path.abspath(path)))

    def path(self, p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    def validate(self) -> None:
        if self.code not in CODE_KINDS:
            raise ConfigError(f"code must be one of {CODE_KINDS}")
        if self.d < 1 or self.d % 2 == 0:
            raise ConfigError("d must be odd and >= 1")
        if not isinstance(self.shots, int) or self.shots < 1:
            raise ConfigError(f"shots must be a positive integer, got {self.shots!r}")
        if not self.T or any(not isinstance(t, int) or t < 0 for t in self.T):
            raise ConfigError("T must be a non-empty list of non-negative integers")
        if list(self.T) != sorted(set(self.T)):
            raise ConfigError("T list must be sorted ascending without repeats")
        if not self.bases or any(b not in ("X", "Z") for b in self.bases):
            raise ConfigError("bases must be a non-empty subset of X, Z")
        for s in self.states or []:
            if s not in _TAG:
                raise ConfigError(f"unknown state {s!r}")
        if not self.jobs():
            raise ConfigError("no (basis, state) combination selected")
        self._check_noise(self.noise, "noise", truth=True)
        if self.leakage is not None:
            try:
                LeakageParams(**self.leakage)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"leakage: {exc}") from None
        if self.gmm is not None and self.gmm.get("truth") is not None and not os.path.exists(self.path(self.gmm["truth"])):
            raise ConfigError(f"gmm truth file {self.gmm['truth']!r} does not exist")
        names = [x.name for x in self.decoders]
        if len(set(names)) != len(names):
            raise ConfigError("decoder names must be unique")
        for x in self.decoders:
            try:
                x.soft
            except ValueError as exc:
                raise ConfigError(f"decoder {x.name!r}: {exc}") from None
            if self.gmm is None and (x.variant != "hard" or x.cutoff is not None):
                raise ConfigError(f"decoder {x.name!r} needs IQ data but no gmm section is configured")
            if x.bp_iters is not None and x.bp_iters < 1:
                raise ConfigError(f"decoder {x.name!r}: bp_iters must be >= 1")
            if x.model != "truth":
                self._check_noise(x.model, f"decoder {x.name!r} model", truth=False)
        if self.baseline is not None and self.baseline not in names:
            raise ConfigError(f"baseline {self.baseline!r} is not a configured decoder")
        if self.sweep_decoder is not None and self.sweep_decoder not in names:
            raise ConfigError(f"sweep_decoder {self.sweep_decoder!r} is not a configured decoder")
        if any(not (0 < c <= 1) for c in self.cutoffs):
            raise ConfigError("cutoffs must lie in (0, 1]")
        if self.calibration_shots < 1:
            raise ConfigError("calibration_shots must be >= 1")

    def _check_noise(self, spec, what: str, truth: bool) -> None:
        if not isinstance(spec, dict) or "kind" not in spec:
            raise ConfigError(f"{what}: expected an object with a 'kind'")
        kind = spec["kind"]
        if kind in ("uniform", "inhomogeneous"):
            if not (0 <= float(spec.get("p", -1)) <= 0.5):
                raise ConfigError(f"{what}: p must lie in [0, 1/2]")
        elif kind == "snapshot":
            if spec.get("mode", "global") not in ("global", "per-qubit"):
                raise ConfigError(f"{what}: mode must be global or per-qubit")
            if spec.get("of") == "truth":
                if truth:
                    raise ConfigError(f"{what}: a snapshot of the truth cannot be the truth")
            elif not os.path.exists(self.path(spec.get("path", ""))):
                raise ConfigError(f"{what}: snapshot file {spec.get('path')!r} does not exist")
        elif kind == "characterised":
            if not os.path.exists(self.path(spec.get("path", ""))):
                raise ConfigError(f"{what}: model file {spec.get('path')!r} does not exist")
        else:
            raise ConfigError(f"{what}: unknown noise kind {kind!r}")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("base_dir",)}
        d["decoders"] = [asdict(x) for x in self.decoders]
        return d

    def hash(self) -> str:
        """Digest of everything that determines the results (not the output path)."""
        d = self.to_dict()
        d.pop("out")
        files = {}
        for spec in [self.noise] + [x.model for x in self.decoders if isinstance(x.model, dict)]:
            if "path" in spec:
                files[spec["path"]] = _file_digest(self.path(spec["path"]))
        if self.gmm and self.gmm.get("truth"):
            files[self.gmm["truth"]] = _file_digest(self.path(self.gmm["truth"]))
        d["files"] = files
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def jobs(self) -> list[tuple[str, str, int]]:
        out = []
        for b in self.bases:
            for s in ("0", "1") if b == "Z" else ("+", "-"):
                if self.states is None or s in self.states:
                    out.extend((b, s, t) for t in self.T)
        return out

    @property
    def baseline_name(self) -> str:
        if self.baseline is not None:
            return self.baseline
        names = [x.name for x in self.decoders]
        return "calibration-global" if "calibration-global" in names else names[0]


def _file_digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()[:16]


def provenance(cfg: RunConfig) -> dict:
    import numba
    import scipy

    return {
        "config_hash": cfg.hash(),
        "versions": {"compassqec": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__},
    }


def _header(cfg: RunConfig) -> dict:
    p = provenance(cfg)
    return {"config_hash": p["config_hash"], "versions": " ".join(f"{k}={v}" for k, v in p["versions"].items())}


def _comment(cfg: RunConfig) -> str:
    return "".join(f"# {k}: {v}\n" for k, v in _header(cfg).items())


def _write(cfg: RunConfig, rel: str, text: str) -> str:
    path = os.path.join(cfg.out, rel)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)
    return path


def _read(cfg: RunConfig, rel: str, stage: str) -> str:
    path = os.path.join(cfg.out, rel)
    if not os.path.exists(path):
        raise FileNotFoundError(f"{path} is missing; run the {stage!r} stage first")
    with open(path) as fh:
        return fh.read()


def job_tag(basis: str, state: str, T: int) -> str:
    return f"{basis}{_TAG[state]}_T{T}"


def job_seed(cfg: RunConfig, *parts) -> int:
    h = hashlib.sha256(json.dumps([cfg.seed, *parts]).encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


# ---------------------------------------------------------------------------
# stages


def stage_layout(cfg: RunConfig, workers: int = 1) -> None:
    patch = build_patch(cfg.code, cfg.d, cfg.anchor, build_lattice())
    sched = build_schedule(cfg.code, patch)
    prov = provenance(cfg)
    _write(cfg, "layout/patch.json", json.dumps({**json.loads(patch_to_json(patch)), "provenance": prov}, indent=1))
    _write(cfg, "layout/schedule.json", json.dumps({**json.loads(schedule_to_json(sched)), "provenance": prov}, indent=1))


def _patch(cfg: RunConfig):
    patch = patch_from_json(_read(cfg, "layout/patch.json", "layout"))
    sched = schedule_from_json(_read(cfg, "layout/schedule.json", "layout"))
    return patch, sched


def stage_build(cfg: RunConfig, workers: int = 1) -> None:
    patch, sched = _patch(cfg)
    for b, s, t in cfg.jobs():
        prog = build_memory_circuit(patch, sched, b, s, t)
        _write(cfg, f"circuits/{job_tag(b, s, t)}.txt", _comment(cfg) + program_to_text(prog))


def _program(cfg: RunConfig, b: str, s: str, t: int) -> CircuitProgram:
    return program_from_text(_read(cfg, f"circuits/{job_tag(b, s, t)}.txt", "build"))


def _noise(cfg: RunConfig, spec: dict, prog: CircuitProgram, truth: NoiseModel | None = None) -> NoiseModel:
    kind = spec["kind"]
    if kind == "uniform":
        return uniform_model(float(spec["p"]))
    if kind == "inhomogeneous":
        opts = {k: spec[k] for k in ("spread", "bad_fraction", "bad_factor", "z_bias", "seed") if k in spec}
        return inhomogeneous_model(prog, float(spec["p"]), **opts)
    if kind == "snapshot":
        if spec.get("of") == "truth":
            snap = snapshot_from_model(truth, prog)
        else:
            with open(cfg.path(spec["path"])) as fh:
                snap = CalibrationSnapshot.from_json(fh.read())
        return from_snapshot(snap, spec.get("mode", "global"))
    return load_characterised(cfg.path(spec["path"]))


def _truth_noise(cfg: RunConfig, prog: CircuitProgram) -> NoiseModel:
    m = _noise(cfg, cfg.noise, prog)
    return m.with_leakage(LeakageParams(**cfg.leakage)) if cfg.leakage else m


def stage_calibrate(cfg: RunConfig, workers: int = 1) -> None:
    if cfg.gmm is None:
        return
    patch, _ = _patch(cfg)
    g = dict(cfg.gmm)
    if g.get("truth"):
        with open(cfg.path(g["truth"])) as fh:
            truth = GMMSet.from_json(fh.read())
    else:
        opts = {k: g[k] for k in ("separation", "leak_offset", "sigma", "jitter", "leak_weight", "geometry") if k in g}
        truth = synthetic_truth(patch.qubits, seed=job_seed(cfg, "gmm-truth"), **opts)
    fitted = {}
    for pulse in ("long", "short"):
        qs = sorted({q for (q, p) in truth.mixtures if p == pulse and q in patch.qubits})
        cal = generate_calibration(qs, pulse, truth, cfg.calibration_shots, job_seed(cfg, "calibration", pulse))
        for q, (iq, lab) in cal.items():
            fitted[(q, pulse)] = fit(iq, lab, qubit=q, pulse=pulse)
    prov = provenance(cfg)
    _write(cfg, "gmm/truth.json", json.dumps({**json.loads(truth.to_json()), "provenance": prov}, indent=1))
    fset = GMMSet(fitted, "fitted")
    _write(cfg, "gmm/fitted.json", json.dumps({**json.loads(fset.to_json()), "provenance": prov}, indent=1))


def _gmms(cfg: RunConfig, which: str) -> GMMSet | None:
    if cfg.gmm is None:
        return None
    return GMMSet.from_json(_read(cfg, f"gmm/{which}.json", "calibrate-gmm"))


def _sample_job(cfg: RunConfig, job) -> str:
    b, s, t = job
    prog = _program(cfg, b, s, t)
    batch = sample(prog, _truth_noise(cfg, prog), _gmms(cfg, "truth"), cfg.shots, job_seed(cfg, "sample", b, s, t))
    batch.meta.update(provenance(cfg))
    path = os.path.join(cfg.out, f"shots/{job_tag(b, s, t)}.shots")
    os.makedirs(os.path.dirname(path), exist_ok=True)
    batch.save(path)
    return path


def _fan_out(cfg: RunConfig, fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(cfg, j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, [cfg] * len(jobs), jobs))


def stage_sample(cfg: RunConfig, workers: int = 1) -> None:
    _fan_out(cfg, _sample_job, cfg.jobs(), workers)


def _shots(cfg: RunConfig, b: str, s: str, t: int) -> ShotBatch:
    path = os.path.join(cfg.out, f"shots/{job_tag(b, s, t)}.shots")
    if not os.path.exists(path):
        raise FileNotFoundError(f"{path} is missing; run the 'sample' stage first")
    return ShotBatch.load(path)


def _decoder_gmms(cfg: RunConfig, prog: CircuitProgram, batch: ShotBatch) -> GMMSet | None:
    fitted = _gmms(cfg, "fitted")
    if fitted is None or not cfg.reweight:
        return fitted
    out = dict(fitted.mixtures)
    groups: dict = {}
    for ins in prog.measurements():
        groups.setdefault((ins.qubits[0], ins.pulse), []).append(ins.meas)
    for key, idx in groups.items():
        try:
            out[key] = reweight(fitted[key], batch.iq[:, idx].reshape(-1, 2))
        except ReweightError:
            pass  # keep the calibration weights
    return GMMSet(out, fitted.tag + "+reweighted")


def _readout_rates(gmms: GMMSet | None, prog: CircuitProgram) -> dict:
    if gmms is None:
        return {}
    keys = {(i.qubits[0], i.pulse) for i in prog.measurements()}
    rates = {}
    for k in sorted(keys):
        g = gmms[k]
        e0 = assignment_error(g, 0, 100_000, seed=1)
        e1 = assignment_error(g, 1, 100_000, seed=2)
        rates[k] = float((e0[1] + e1[0]) / 2)
    return rates


def _decode_job(cfg: RunConfig, job, names=None, cutoff_override="keep") -> dict:
    b, s, t = job
    prog = _program(cfg, b, s, t)
    batch = _shots(cfg, b, s, t)
    ds = discover_detectors(prog)
    det, obs = ds.evaluate(batch.hard)
    gm = _decoder_gmms(cfg, prog, batch)
    post = None if gm is None or batch.iq is None else measurement_posteriors(prog, gm, batch.iq)
    dmask = data_measurements(prog)
    truth = _noise(cfg, cfg.noise, prog)
    ro = _readout_rates(gm, prog) if cfg.readout_from_gmm else {}
    out = {}
    for spec in cfg.decoders:
        if names is not None and spec.name not in names:
            continue
        model = truth if spec.model == "truth" else _noise(cfg, spec.model, prog, truth)
        if ro:
            model = with_readout_error(model, prog, ro)
        dem = compile_dem(prog, model, ds, warn=False)
        _write(cfg, f"dems/{spec.name}/{job_tag(b, s, t)}.dem", _comment(cfg) + dem_to_text(dem))
        graph = MatchingGraph.from_dem(dem)
        conf = spec.soft if cutoff_override == "keep" else SoftConfig(spec.variant, cutoff_override)
        rep = decode_batch(graph, det, obs, config=conf, posteriors=post, data_mask=dmask, bp_iters=spec.bp_iters)
        wrong = (rep.predicted != rep.true).any(axis=1)
        score = post[:, :, 2].max(axis=1) if post is not None else np.zeros(len(det))
        if cutoff_override == "keep":
            _write(cfg, f"reports/{spec.name}/{job_tag(b, s, t)}.csv", rep.to_csv(_header(cfg)))
        out[spec.name] = {
            "shots": rep.shots, "accepted": rep.accepted, "failures": rep.failures, "wrong": wrong, "score": score,
        }
    return out


def _counts_job(cfg: RunConfig, job) -> dict:
    res = _decode_job(cfg, job)
    return {k: {kk: v[kk] for kk in ("shots", "accepted", "failures")} for k, v in res.items()}


def stage_decode(cfg: RunConfig, workers: int = 1) -> None:
    jobs = cfg.jobs()
    res = _fan_out(cfg, _counts_job, jobs, workers)
    counts = {name: {} for name in (x.name for x in cfg.decoders)}
    for (b, s, t), r in zip(jobs, res):
        for name, c in r.items():
            counts[name][job_tag(b, s, t)] = {"basis": b, "state": s, "T": t, **c}
    _write(cfg, "reports/counts.json", json.dumps({"provenance": provenance(cfg), "counts": counts}, indent=1, sort_keys=True))


def _curves(cfg: RunConfig) -> dict[tuple[str, str], MemoryCurve]:
    counts = json.loads(_read(cfg, "reports/counts.json", "decode"))["counts"]
    out = {}
    for name, rows in counts.items():
        for b in cfg.bases:
            states: dict[str, list[CurvePoint]] = {}
            for r in sorted(rows.values(), key=lambda r: (r["state"], r["T"])):
                if r["basis"] == b:
                    states.setdefault(r["state"], []).append(CurvePoint(r["T"], r["shots"], r["accepted"], r["failures"]))
            if states:
                out[(name, b)] = MemoryCurve(b, states)
    return out


def _fit_all(cfg: RunConfig) -> dict:
    fits = {}
    for (name, b), cv in _curves(cfg).items():
        entry = {"decoder": name, "basis": b}
        try:
            fl = fit_logical(cv, bootstrap=cfg.bootstrap, seed=job_seed(cfg, "fit", name, b) % 2**32)
            entry["logical"] = fl.to_dict()
        except FitError as exc:
            entry["logical"] = {"error": str(exc)}
        try:
            fa = fit_abort(cv, bootstrap=cfg.bootstrap, seed=job_seed(cfg, "abort", name, b) % 2**32)
            entry["abort"] = fa.to_dict()
        except FitError as exc:
            entry["abort"] = {"error": str(exc)}
        fits[f"{name}/{b}"] = entry
    return fits


def stage_fit(cfg: RunConfig, workers: int = 1) -> None:
    curves = _curves(cfg)
    _write(cfg, "curves.csv", curves_to_csv({f"{n}/{b}": c for (n, b), c in curves.items()}, _header(cfg)))
    _write(cfg, "fits.json", summary_json({"provenance": provenance(cfg), "fits": _fit_all(cfg)}))


def _sweep_job(cfg: RunConfig, job):
    name = _sweep_name(cfg)
    r = _decode_job(cfg, job, names={name}, cutoff_override=None)[name]
    return r["score"], r["wrong"]


def _sweep_name(cfg: RunConfig) -> str | None:
    if cfg.sweep_decoder is not None:
        return cfg.sweep_decoder
    with_cut = [x.name for x in cfg.decoders if x.cutoff is not None]
    return with_cut[0] if with_cut else None


def stage_sweep(cfg: RunConfig, workers: int = 1) -> None:
    name = _sweep_name(cfg)
    if name is None or cfg.gmm is None:
        return
    jobs = cfg.jobs()
    res = _fan_out(cfg, _sweep_job, jobs, workers)
    for b in cfg.bases:
        pts: dict[str, list[PointOutcomes]] = {}
        for (bb, s, t), (score, wrong) in zip(jobs, res):
            if bb == b:
                pts.setdefault(s, []).append(PointOutcomes(t, score, wrong))
        if not pts:
            continue
        sw = sweep_cutoff(pts, cfg.cutoffs, bootstrap=cfg.bootstrap, seed=job_seed(cfg, "sweep", b) % 2**32)
        _write(cfg, f"tradeoff_{b}.csv", tradeoff_to_csv(sw.rows, {**_header(cfg), "decoder": name}))


def stage_report(cfg: RunConfig, workers: int = 1) -> None:
    fits = _fit_all(cfg)
    base = cfg.baseline_name
    rows = []
    for x in cfg.decoders:
        for b in cfg.bases:
            e = fits.get(f"{x.name}/{b}")
            if e is None:
                continue
            lg, ab = e["logical"], e["abort"]
            eps = lg.get("rate")
            ref = fits.get(f"{base}/{b}", {}).get("logical", {}).get("rate")
            rows.append({
                "decoder": x.name,
                "basis": b,
                "variant": x.variant,
                "cutoff": x.cutoff,
                "eps_L": eps,
                "eps_L_ci": lg.get("ci"),
                "eps_abort": ab.get("rate") if x.cutoff is not None else 0.0,
                "eps_abort_ci": ab.get("ci") if x.cutoff is not None else None,
                "improvement_pct": None if eps is None or ref is None else improvement(ref, eps),
                "excluded_T": lg.get("excluded"),
            })
    conf = cfg.to_dict()
    conf.pop("out")  # where a run was written is not part of its result
    summary = {"provenance": provenance(cfg), "baseline": base, "config": conf, "rows": rows}
    _write(cfg, "summary.json", summary_json(summary))
    buf = io.StringIO()
    buf.write(_comment(cfg))
    w = csv.writer(buf, lineterminator="\n")
    cols = ["decoder", "basis", "variant", "cutoff", "eps_L", "eps_L_lo", "eps_L_hi", "eps_abort", "improvement_pct"]
    w.writerow(cols)
    for r in rows:
        ci = r["eps_L_ci"] or ("", "")
        w.writerow([
            r["decoder"], r["basis"], r["variant"], "" if r["cutoff"] is None else r["cutoff"],
            _f(r["eps_L"]), _f(ci[0]), _f(ci[1]), _f(r["eps_abort"]), _f(r["improvement_pct"]),
        ])
    _write(cfg, "summary.csv", buf.getvalue())


def _f(x):
    return "" if x is None or x == "" else f"{x:.8g}"


_STAGE_FN = {
    "layout": stage_layout,
    "build": stage_build,
    "calibrate-gmm": stage_calibrate,
    "sample": stage_sample,
    "decode": stage_decode,
    "fit": stage_fit,
    "sweep-cutoff": stage_sweep,
    "report": stage_report,
}


def run_stage(cfg: RunConfig, stage: str, workers: int = 1) -> None:
    try:
        _STAGE_FN[stage](cfg, workers)
    except StageError:
        raise
    except Exception as exc:  # report which stage broke; earlier artifacts stay on disk
        raise StageError(stage, exc) from exc


def run(cfg: RunConfig, workers: int = 1) -> str:
    """Every stage in order; returns the run directory."""
    os.makedirs(cfg.out, exist_ok=True)
    _write(cfg, "config.json", json.dumps({"provenance": provenance(cfg), "config": cfg.to_dict()}, indent=1, sort_keys=True))
    for st in STAGES:
        run_stage(cfg, st, workers)
    return cfg.out


# ---------------------------------------------------------------------------
# command line


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="compassqec", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name in STAGES + ("run",):
        p = sub.add_parser(name)
        p.add_argument("--config", help="run config (JSON)")
        p.add_argument("--out", help="run directory (overrides the config)")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--anchor", type=int, help="lowest-index qubit of the patch")
        p.add_argument("--code", choices=CODE_KINDS)
        p.add_argument("-d", "--distance", type=int)
        if name in ("decode", "run"):
            p.add_argument("--variant", help="decode with this single soft variant")
            p.add_argument("--cutoff", type=float, help="leakage post-selection cutoff")
            p.add_argument("--bp-iters", type=int, help="belief-propagation reweighting iterations")
    return ap


def _config_from_args(args) -> RunConfig:
    if args.config:
        with open(args.config) as fh:
            d = json.load(fh)
        base = os.path.dirname(os.path.abspath(args.config))
    else:
        d, base = {}, os.getcwd()
    for key, val in (("out", args.out), ("seed", args.seed), ("anchor", args.anchor), ("code", args.code), ("d", args.distance)):
        if val is not None:
            d[key] = val
    if getattr(args, "variant", None) is not None or getattr(args, "cutoff", None) is not None or getattr(args, "bp_iters", None) is not None:
        variant = args.variant or "hard"
        name = variant + ("+PS" if args.cutoff is not None else "")
        d["decoders"] = [{"name": name, "variant": variant, "cutoff": args.cutoff, "bp_iters": args.bp_iters}]
        d.pop("baseline", None)
        d.pop("sweep_decoder", None)
    return RunConfig.from_dict(d, base)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.cmd == "run":
            run(cfg, args.workers)
        else:
            run_stage(cfg, args.cmd, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    print(cfg.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
