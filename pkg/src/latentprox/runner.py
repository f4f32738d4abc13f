"""Run configuration, experiment orchestration, and persistence.

Configs are strict: unknown keys are rejected with a suggestion, every
resolved default is echoed into the manifest, and a manifest alone suffices
to reproduce a run bit-exactly (all randomness flows from the root seed
through per-chain spawn keys).  Metrics are append-only CSV rows with a fixed
header; samples are decimal-text vectors plus portable graymaps for grids.
"""

from __future__ import annotations

import difflib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import constraints as C
from .alm import AlmState
from .decoders import (DecoderMap, estimate_lipschitz, linear_decoder,
                       random_linear_decoder, random_mlp_decoder)
from .diagnostics import (BoundReport, GaussianFit, check_feasibility_contraction,
                          check_fidelity_drift, fit_gaussian, gaussian_kl)
from .dpo import DpoConfig, design_loop, make_simulator
from .errors import ConfigError, ParameterError
from .samplers import SamplerConfig, chain_rng, sample
from .schedules import NoiseSchedule, make_schedule
from .scores import ScoreField, gaussian_mixture_field, linear_gaussian_field
from .serialize import (load_decoder, load_score_field, save_decoder,
                        save_score_field, save_vector)

METRICS_HEADER = "chain,t,i,phase,gamma,score_norm,violation,dist"
ALM_HEADER = ("chain,t,i,outer_iterations,inner_iterations,final_violation,"
              "final_multiplier,final_penalty")
DESIGN_HEADER = "chain,step,mse"

REQUIRED = object()

SCHEMA = {
    "experiment": "run",
    "seed": REQUIRED,
    "chains": 1,
    "out": REQUIRED,
    "workers": 1,
    "schedule": {"T": 20, "abar_start": 1.0, "abar_end": 0.02,
                 "gamma_max": 0.05, "gamma_min": 0.005, "M": 1},
    "score": {"kind": REQUIRED, "mean": None, "cov": None, "weights": None,
              "means": None, "covs": None, "file": None},
    "decoder": {"kind": "linear", "latent_dim": None, "ambient_dim": None,
                "init": {"method": "orthonormal", "seed": 0, "scale": 1.0,
                         "hidden": 16},
                "file": None, "lipschitz_probes": 64},
    "constraint": {"kind": REQUIRED, "delta": 1e-4, "prox_weight": 1.0,
                   "normal": None, "offset": None, "radius": None,
                   "center": None, "lower": None, "upper": None,
                   "grid": None, "fraction": None, "count": None,
                   "margin": 1e-3, "accept_radius": None, "model": None,
                   "smoothness": 1.0},
    "sampler": {"mode": "proximal_latent", "solver": "closed_form",
                "lr": None, "inner_cap": 500, "final_projection": True,
                "noise_scale": 1.0, "correct_levels": None,
                "correct_every_step": False, "record_vectors": True},
    "alm": {"multiplier": 0.0, "penalty": 1.0, "growth": 2.0,
            "penalty_cap": 1e4, "inner_step": 1e-2, "max_inner": 200,
            "max_outer": 50, "tol": 1e-4},
    "dpo": {"nu": REQUIRED, "M": REQUIRED, "seed": 0, "target": None,
            "absorb_scale": False, "baseline": True,
            "simulator": {"name": REQUIRED, "matrix": None, "bias": None,
                          "scale": 2.0, "slope": 0.3}},
    "design": {"steps": 5, "step_size": 0.5, "tol": 0.0, "mode": "chain"},
    "reports": {"contraction": False, "fidelity": False, "beta": 1.0},
    "checks": {"porosity_exact": False, "feasible_final": False,
               "contraction_fraction": None, "fidelity_cumulative": False,
               "design_mse_ratio": None},
}

SECTION_NONE_IF_ABSENT = ("score", "decoder", "constraint", "alm", "dpo",
                          "design")


def _suggest(key: str, known) -> str:
    close = difflib.get_close_matches(key, list(known), n=1)
    return f"; did you mean {close[0]!r}?" if close else ""


def _resolve(section: dict, schema: dict, path: str) -> dict:
    if not isinstance(section, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping")
    for key in section:
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} at {path or 'top level'}"
                              f"{_suggest(key, schema)}")
    out = {}
    for key, default in schema.items():
        where = f"{path}.{key}" if path else key
        if isinstance(default, dict):
            sub = section.get(key)
            out[key] = _resolve(sub if sub is not None else {}, default, where)
        elif key in section and section[key] is not None:
            out[key] = section[key]
        elif default is REQUIRED:
            raise ConfigError(f"missing required key {where!r}")
        else:
            out[key] = default
    return out


def resolve_config(data: dict) -> dict:
    """Validate a raw config mapping and fill in every default.

    Unknown keys are rejected (with a close-match suggestion); the root seed
    is mandatory so no run is ever implicitly seeded.
    """
    if not isinstance(data, dict):
        raise ConfigError("configuration document must be a mapping")
    for key in data:
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r} at top level"
                              f"{_suggest(key, SCHEMA)}")
    if data.get("seed") is None:
        raise ConfigError("missing required key 'seed' (no implicit seeding)")
    out = {}
    for key, default in SCHEMA.items():
        if isinstance(default, dict):
            if key in SECTION_NONE_IF_ABSENT and data.get(key) is None:
                out[key] = None
            else:
                out[key] = _resolve(data.get(key) or {}, default, key)
        elif key in data and data[key] is not None:
            out[key] = data[key]
        elif default is REQUIRED:
            raise ConfigError(f"missing required key {key!r}")
        else:
            out[key] = default
    return out


@dataclass
class RunConfig:
    """A fully resolved run configuration."""

    data: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        return cls(data=resolve_config(raw))

    def __getitem__(self, key):
        return self.data[key]

    def get(self, key, default=None):
        return self.data.get(key, default)


def load_config(path) -> RunConfig:
    """Load and validate a YAML (or JSON) configuration document."""
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" \
            if mark else ""
        raise ConfigError(f"cannot parse {path}{where}: {exc}") from exc
    return RunConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# Component builders


def build_schedule(cfg: dict) -> NoiseSchedule:
    return make_schedule(T=int(cfg["T"]), abar_start=float(cfg["abar_start"]),
                         abar_end=float(cfg["abar_end"]),
                         gamma_max=float(cfg["gamma_max"]),
                         gamma_min=float(cfg["gamma_min"]), M=int(cfg["M"]))


def build_score(cfg: dict, schedule: NoiseSchedule) -> ScoreField:
    if cfg.get("file"):
        return load_score_field(cfg["file"])
    kind = cfg["kind"]
    if kind == "linear_gaussian":
        return linear_gaussian_field(cfg["mean"], cfg["cov"], schedule)
    if kind == "gaussian_mixture":
        return gaussian_mixture_field(cfg["weights"], cfg["means"],
                                      cfg["covs"], schedule)
    raise ConfigError(f"cannot build score field of kind {kind!r}")


def build_decoder(cfg: dict | None) -> DecoderMap | None:
    if cfg is None:
        return None
    if cfg.get("file"):
        return load_decoder(cfg["file"])
    init = cfg["init"]
    kind = cfg["kind"]
    lat, amb = int(cfg["latent_dim"]), int(cfg["ambient_dim"])
    if kind == "linear":
        if init["method"] == "orthonormal":
            dec = random_linear_decoder(lat, amb, seed=int(init["seed"]),
                                        scale=float(init["scale"]))
        elif init["method"] == "gaussian":
            rng = np.random.default_rng(int(init["seed"]))
            W = float(init["scale"]) * rng.standard_normal((amb, lat)) \
                / np.sqrt(lat)
            dec = linear_decoder(W)
        else:
            raise ConfigError(f"unknown decoder init {init['method']!r}")
    elif kind == "smooth_mlp":
        dec = random_mlp_decoder(lat, amb, hidden=int(init["hidden"]),
                                 seed=int(init["seed"]),
                                 scale=float(init["scale"]))
    else:
        raise ConfigError(f"unknown decoder kind {kind!r}")
    return dec


def build_constraint(cfg: dict | None) -> C.ConstraintSpec | None:
    if cfg is None:
        return None
    kind = cfg["kind"]
    common = {"delta": float(cfg["delta"]),
              "prox_weight": float(cfg["prox_weight"]),
              "smoothness": float(cfg["smoothness"])}
    if kind == "halfspace":
        return C.halfspace(cfg["normal"], cfg["offset"], **common)
    if kind == "l2_ball":
        return C.l2_ball(cfg["radius"], center=cfg["center"], **common)
    if kind == "box":
        return C.box(cfg["lower"], cfg["upper"], **common)
    if kind == "porosity":
        rows, cols = (int(v) for v in cfg["grid"])
        if cfg["count"] is not None:
            K = int(cfg["count"])
        elif cfg["fraction"] is not None:
            # round half up, recorded in the manifest via the resolved count
            K = int(np.floor(float(cfg["fraction"]) * rows * cols + 0.5))
        else:
            raise ConfigError("porosity constraint needs 'fraction' or 'count'")
        return C.porosity_constraint((rows, cols), K, margin=cfg["margin"],
                                     **common)
    if kind == "surrogate_centroid":
        m = cfg["model"]
        if m is None:
            raise ConfigError("surrogate_centroid constraint needs a model")
        model = C.CentroidModel(
            axes=np.array(m["axes"]),
            feature_mean=np.array(m["feature_mean"]),
            target_centroid=np.array(m["target_centroid"]),
            forbidden_centroid=np.array(m["forbidden_centroid"]),
            p_trig=float(m["p_trig"]),
            feature_map=None if m.get("feature_map") is None
            else np.array(m["feature_map"]))
        return C.centroid_constraint(model, cfg["accept_radius"], **common)
    raise ConfigError(f"cannot build constraint of kind {kind!r}")


def build_alm(cfg: dict | None) -> AlmState | None:
    if cfg is None:
        return None
    return AlmState(multiplier=float(cfg["multiplier"]),
                    penalty=float(cfg["penalty"]), growth=float(cfg["growth"]),
                    penalty_cap=float(cfg["penalty_cap"]),
                    inner_step=float(cfg["inner_step"]),
                    max_inner=int(cfg["max_inner"]),
                    max_outer=int(cfg["max_outer"]), tol=float(cfg["tol"]))


def build_dpo(cfg: dict | None):
    if cfg is None:
        return None, None
    sim_cfg = dict(cfg["simulator"])
    name = sim_cfg.pop("name")
    kwargs = {}
    if sim_cfg.get("matrix") is not None:
        kwargs["matrix"] = np.array(sim_cfg["matrix"])
    if sim_cfg.get("bias") is not None:
        kwargs["bias"] = np.array(sim_cfg["bias"])
    if name == "saturating":
        kwargs["scale"] = float(sim_cfg["scale"])
    if name == "piecewise":
        kwargs["slope"] = float(sim_cfg["slope"])
    sim = make_simulator(name, **kwargs)
    dpo_cfg = DpoConfig(nu=float(cfg["nu"]), M=int(cfg["M"]),
                        seed=int(cfg["seed"]),
                        target=None if cfg["target"] is None
                        else np.array(cfg["target"]),
                        absorb_scale=bool(cfg["absorb_scale"]),
                        baseline=bool(cfg["baseline"]))
    return sim, dpo_cfg


def build_sampler_config(cfg: RunConfig) -> SamplerConfig:
    if cfg["score"] is None:
        raise ConfigError("sampling run requires a score section")
    schedule = build_schedule(cfg["schedule"])
    score = build_score(cfg["score"], schedule)
    decoder = build_decoder(cfg["decoder"])
    constraint = build_constraint(cfg["constraint"])
    sim, dpo_cfg = build_dpo(cfg["dpo"])
    s = cfg["sampler"]
    window = s["correct_levels"]
    return SamplerConfig(
        schedule=schedule, score=score, mode=s["mode"], decoder=decoder,
        constraint=constraint, solver=s["solver"],
        lr=None if s["lr"] is None else float(s["lr"]),
        inner_cap=int(s["inner_cap"]),
        final_projection=bool(s["final_projection"]),
        noise_scale=float(s["noise_scale"]),
        correct_levels=None if window is None else (int(window[0]),
                                                    int(window[1])),
        correct_every_step=bool(s["correct_every_step"]),
        alm=build_alm(cfg["alm"]), simulator=sim, dpo=dpo_cfg,
        record_vectors=bool(s["record_vectors"]))


# ---------------------------------------------------------------------------
# Artifacts


def render_grid(grid, path) -> None:
    """Write a binary portable graymap; v in [-1, 1] maps to round-half-up
    of (v + 1) / 2 * 255."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2:
        raise ParameterError("render_grid expects a 2-D grid")
    levels = np.floor((grid + 1.0) / 2.0 * 255.0 + 0.5)
    data = np.clip(levels, 0, 255).astype(np.uint8)
    rows, cols = grid.shape
    header = f"P5\n{cols} {rows}\n255\n".encode("ascii")
    try:
        Path(path).write_bytes(header + data.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write graymap {path}: {exc}") from exc


def _fmt(v) -> str:
    return repr(float(v))


def _metrics_row(chain: int, row) -> str:
    return (f"{chain},{row.t},{row.i},{row.phase},{_fmt(row.gamma)},"
            f"{_fmt(row.score_norm)},{_fmt(row.violation)},{_fmt(row.dist)}")


@dataclass
class RunManifest:
    """Everything needed to reproduce and audit a run."""

    data: dict

    def __getitem__(self, key):
        return self.data[key]

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.data, indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls(data=json.loads(Path(path).read_text()))


def _report_doc(report: BoundReport) -> dict:
    doc = {"G": report.G, "lipschitz": report.lipschitz, "beta": report.beta,
           "beta_prime": report.beta_prime,
           "fraction_holding": report.fraction_holding,
           "precondition_ok": report.precondition_ok,
           "transitions": len(report.records)}
    if report.cumulative is not None:
        doc["cumulative_holds"] = report.cumulative.holds
        doc["cumulative_lhs"] = report.cumulative.lhs
        doc["cumulative_rhs"] = report.cumulative.rhs
    return doc


def run_experiment(cfg: RunConfig) -> RunManifest:
    """Execute a sampling experiment: chains, metrics, samples, reports."""
    started = time.time()
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    sampler_cfg = build_sampler_config(cfg)
    constraint = sampler_cfg.constraint
    decoder = sampler_cfg.decoder

    measured = {}
    if decoder is not None:
        probes = int(cfg["decoder"]["lipschitz_probes"])
        measured["lipschitz"] = estimate_lipschitz(
            decoder, probes, np.random.default_rng(int(cfg["seed"])))
        save_decoder(decoder, out / "decoder.json")
    save_score_field(sampler_cfg.score, out / "score.json")

    chains = int(cfg["chains"])
    workers = max(1, int(cfg["workers"]))
    root_seed = int(cfg["seed"])
    finals, traces, errors = [], [], []
    samples_dir = out / "samples"
    samples_dir.mkdir(exist_ok=True)

    def run_chain(i):
        return sample(sampler_cfg, chain_rng(root_seed, i))

    alm_rows = []
    with open(out / "metrics.csv", "w") as metrics:
        metrics.write(METRICS_HEADER + "\n")
        # chains are independent; results are written in chain order so the
        # metrics stream is byte-identical for any worker count
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_chain, i) for i in range(chains)]
            for i, future in enumerate(futures):
                try:
                    final, trace = future.result()
                except Exception as exc:  # record, keep running other chains
                    errors.append({"chain": i,
                                   "error": f"{type(exc).__name__}: {exc}"})
                    continue
                trace.seed_lineage = (root_seed, i)
                for row in trace.rows:
                    metrics.write(_metrics_row(i, row) + "\n")
                metrics.flush()
                finals.append(final)
                traces.append(trace)
                for t, it, rep in trace.alm_reports:
                    alm_rows.append(
                        f"{i},{t},{it},{rep.outer_iterations},"
                        f"{rep.inner_iterations},{_fmt(rep.final_violation)},"
                        f"{_fmt(rep.final_multiplier)},"
                        f"{_fmt(rep.final_penalty)}")
                save_vector(final, samples_dir / f"chain_{i:04d}.txt")
                if constraint is not None and constraint.kind == "porosity":
                    render_grid(final.reshape(constraint.grid_shape),
                                samples_dir / f"chain_{i:04d}.pgm")
    if alm_rows:
        (out / "alm.csv").write_text(ALM_HEADER + "\n"
                                     + "\n".join(alm_rows) + "\n")

    measured["G"] = max((t.max_score_norm() for t in traces), default=0.0)
    reports = {}
    if constraint is not None and constraint.kind == "porosity":
        measured["porosity_count"] = constraint.target_count
        pixels = constraint.grid_shape[0] * constraint.grid_shape[1]
        errs = [abs(C.porosity(np.clip(f.reshape(constraint.grid_shape),
                                       -1, 1)) - constraint.target_count)
                / pixels for f in finals]
        # count-gap fraction per sample; > 0.10 mirrors the headline
        # mismatch metric used for grid experiments
        reports["porosity_error"] = {
            "max_fraction": max(errs, default=0.0),
            "samples_above_0.10": int(sum(e > 0.10 for e in errs)),
        }
    rep_cfg = cfg["reports"]
    if rep_cfg["contraction"] and constraint is not None and traces:
        per_chain = [check_feasibility_contraction(
            t, constraint, decoder, beta=float(rep_cfg["beta"]))
            for t in traces]
        held = sum(sum(r.holds for r in rep.records) for rep in per_chain)
        total = sum(len(rep.records) for rep in per_chain)
        reports["contraction"] = {
            "fraction_holding": held / total if total else 1.0,
            "transitions": total,
            "precondition_ok": all(r.precondition_ok for r in per_chain),
            "G": measured["G"],
            "lipschitz": measured.get("lipschitz"),
        }
    if rep_cfg["fidelity"] and traces and \
            sampler_cfg.score.kind == "linear_gaussian":
        reports["fidelity"] = _fidelity_report(sampler_cfg, traces)

    checks = _run_checks(cfg, sampler_cfg, finals, traces, reports)
    summary = [f"experiment {cfg['experiment']}: {len(finals)}/{chains} "
               f"chains completed"]
    for name, rep in reports.items():
        if "fraction_holding" in rep:
            summary.append(f"{name}: {rep['fraction_holding']:.4f} of "
                           f"{rep['transitions']} transitions hold")
        elif name == "porosity_error":
            summary.append(f"porosity error: max fraction "
                           f"{rep['max_fraction']:.4f}, "
                           f"{rep['samples_above_0.10']} sample(s) above 10%")
        if isinstance(rep, dict) and rep.get("cumulative_holds") is not None:
            summary.append(f"{name}: cumulative bound "
                           f"{'holds' if rep['cumulative_holds'] else 'FAILS'}")
    for name, okc in checks.items():
        summary.append(f"check {name}: {'pass' if okc else 'FAIL'}")
    manifest = RunManifest(data={
        "version": __version__,
        "experiment": cfg["experiment"],
        "experiment_kind": "sample",
        "resolved_config": cfg.data,
        "measured": measured,
        "chain_seeds": [[root_seed, i] for i in range(chains)],
        "chain_errors": errors,
        "artifacts": {
            "metrics": "metrics.csv",
            "score": "score.json",
            "decoder": "decoder.json" if decoder is not None else None,
            "samples": sorted(p.name for p in samples_dir.iterdir()),
        },
        "reports": reports,
        "checks": checks,
        "summary": summary,
        "timing": {"started_unix": started,
                   "elapsed_s": time.time() - started},
        "ok": all(checks.values()) if checks else True,
    })
    manifest.save(out / "manifest.json")
    return manifest


def _fidelity_report(sampler_cfg: SamplerConfig, traces) -> dict:
    """Population KL drift across chains, evaluated in the latent space."""
    field_ = sampler_cfg.score
    schedule = sampler_cfg.schedule
    ref = GaussianFit(mean=field_.means[0], cov=field_.covs[0])
    by_level = {t: [] for t in range(schedule.T + 1)}
    for trace in traces:
        for row in trace.level_final_rows():
            if row.z is not None:
                by_level[row.t - 1].append(row.z)
    kl = np.full(schedule.T + 1, np.nan)
    kl[schedule.T] = gaussian_kl(GaussianFit(
        mean=np.zeros(field_.dim), cov=np.eye(field_.dim)), ref)
    for t, pts in by_level.items():
        if len(pts) >= 2:
            kl[t] = gaussian_kl(fit_gaussian(np.array(pts)), ref)
    G = max(t.max_score_norm() for t in traces)
    report = check_fidelity_drift(kl, schedule, G)
    doc = _report_doc(report)
    doc["space"] = "latent"
    doc["kl_series"] = [float(v) for v in kl]
    return doc


def _run_checks(cfg, sampler_cfg, finals, traces, reports) -> dict:
    checks = {}
    ck = cfg["checks"]
    constraint = sampler_cfg.constraint
    if ck["porosity_exact"] and constraint is not None:
        counts = [C.violation(constraint, f) == 0.0 for f in finals]
        checks["porosity_exact"] = bool(finals) and all(counts)
    if ck["feasible_final"] and constraint is not None:
        checks["feasible_final"] = bool(finals) and all(
            C.violation(constraint, f) <= constraint.delta for f in finals)
    if ck["contraction_fraction"] is not None:
        frac = reports.get("contraction", {}).get("fraction_holding", 0.0)
        checks["contraction_fraction"] = frac >= float(ck["contraction_fraction"])
    if ck["fidelity_cumulative"]:
        checks["fidelity_cumulative"] = bool(
            reports.get("fidelity", {}).get("cumulative_holds", False))
    return checks


def run_design(cfg: RunConfig) -> RunManifest:
    """Execute the simulator-in-the-loop design experiment."""
    started = time.time()
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    decoder = build_decoder(cfg["decoder"])
    if decoder is None:
        raise ConfigError("design experiment requires a decoder")
    sim, dpo_cfg = build_dpo(cfg["dpo"])
    if sim is None or dpo_cfg is None or dpo_cfg.target is None:
        raise ConfigError("design experiment requires a dpo section with a "
                          "target")
    d = cfg["design"]
    chains = int(cfg["chains"])
    root_seed = int(cfg["seed"])
    save_decoder(decoder, out / "decoder.json")
    mses = []
    with open(out / "metrics.csv", "w") as metrics:
        metrics.write(DESIGN_HEADER + "\n")
        for i in range(chains):
            rng = chain_rng(root_seed, i)
            z0 = rng.standard_normal(decoder.latent_dim)
            chain_dpo = DpoConfig(nu=dpo_cfg.nu, M=dpo_cfg.M,
                                  seed=root_seed * 100_003 + i,
                                  target=dpo_cfg.target,
                                  absorb_scale=dpo_cfg.absorb_scale,
                                  baseline=dpo_cfg.baseline)
            z, trace = design_loop(z0, decoder, sim, chain_dpo,
                                   steps=int(d["steps"]),
                                   step_size=float(d["step_size"]),
                                   tol=float(d["tol"]), mode=d["mode"])
            for k, mse in enumerate(trace.mse):
                metrics.write(f"{i},{k},{_fmt(mse)}\n")
            metrics.flush()
            save_vector(z, out / f"design_{i:04d}.txt")
            mses.append(trace.mse)

    checks = {}
    ratio = cfg["checks"]["design_mse_ratio"]
    if ratio is not None:
        checks["design_mse_ratio"] = all(
            m[-1] <= float(ratio) * m[0] for m in mses)
    manifest = RunManifest(data={
        "version": __version__,
        "experiment": cfg["experiment"],
        "experiment_kind": "design",
        "resolved_config": cfg.data,
        "measured": {},
        "chain_seeds": [[root_seed, i] for i in range(chains)],
        "chain_errors": [],
        "artifacts": {"metrics": "metrics.csv", "decoder": "decoder.json"},
        "reports": {"mse": [[float(v) for v in m] for m in mses]},
        "checks": checks,
        "timing": {"started_unix": started,
                   "elapsed_s": time.time() - started},
        "ok": all(checks.values()) if checks else True,
    })
    manifest.save(out / "manifest.json")
    return manifest


def rerun_from_manifest(manifest_path, out_dir) -> RunManifest:
    """Re-execute a run from its manifest into a fresh directory."""
    manifest = RunManifest.load(manifest_path)
    raw = dict(manifest["resolved_config"])
    raw["out"] = str(out_dir)
    cfg = RunConfig.from_dict(raw)
    if manifest.data.get("experiment_kind") == "design":
        return run_design(cfg)
    return run_experiment(cfg)
