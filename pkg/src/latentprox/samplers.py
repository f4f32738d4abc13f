"""Annealed Langevin samplers: unconstrained, projected-ambient, and the
latent proximal-correction sampler.

The proximal sampler runs M Langevin steps per annealing level, then corrects
the latent until the decoded violation drops below the constraint tolerance:
the ambient prox-objective gradient (constraint correction residual plus the
anchor pull (1/lambda)(x - x0)) is pulled back through the decoder and
descended with the correction learning rate.  For exact-projection constraint
kinds an optional final ambient projection restores feasibility exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import constraints as C
from .alm import AlmState, alm_project
from .decoders import DecoderMap, decode, vjp
from .dpo import DpoConfig, Simulator, dpo_loss_grad
from .errors import (AlmNonConvergence, ConfigError, DivergenceError,
                     ParameterError)
from .schedules import NoiseSchedule
from .scores import ScoreField, score

MODES = ("unconstrained", "projected_ambient", "proximal_latent")
SOLVERS = ("closed_form", "alm", "dpo")


@dataclass
class TraceRow:
    """One recorded update: a Langevin step or a correction iteration."""

    t: int
    i: int
    phase: str            # "langevin" | "correction"
    gamma: float
    score_norm: float
    violation: float
    dist: float
    z: np.ndarray | None = None
    x: np.ndarray | None = None


@dataclass
class SampleTrace:
    """Complete evidence stream of one chain."""

    rows: list = field(default_factory=list)
    final_latent: np.ndarray | None = None
    final_sample: np.ndarray | None = None
    seed_lineage: tuple = ()
    shortfalls: list = field(default_factory=list)  # (t, iterations, violation)
    alm_reports: list = field(default_factory=list)  # (t, i, AlmReport)

    def level_end_rows(self):
        """Pre-correction rows: the last Langevin row of each level."""
        out = []
        for k, row in enumerate(self.rows):
            if row.phase != "langevin":
                continue
            nxt = self.rows[k + 1] if k + 1 < len(self.rows) else None
            if nxt is None or nxt.phase != "langevin" or nxt.t != row.t:
                out.append(row)
        return out

    def level_final_rows(self):
        """The last recorded row of each level (post-correction state)."""
        out = []
        for k, row in enumerate(self.rows):
            nxt = self.rows[k + 1] if k + 1 < len(self.rows) else None
            if nxt is None or nxt.t != row.t:
                out.append(row)
        return out

    def max_score_norm(self) -> float:
        norms = [r.score_norm for r in self.rows if r.phase == "langevin"]
        return float(max(norms)) if norms else 0.0


@dataclass
class SamplerConfig:
    """Everything one chain needs: schedule, score, decoder, constraint."""

    schedule: NoiseSchedule
    score: ScoreField
    mode: str
    decoder: DecoderMap | None = None
    constraint: C.ConstraintSpec | None = None
    solver: str = "closed_form"
    lr: float | None = None          # None: 0.1 * gamma_t per level
    inner_cap: int = 500
    final_projection: bool = True
    noise_scale: float = 1.0
    correct_levels: tuple | None = None   # inclusive (t_low, t_high) window
    correct_every_step: bool = False
    alm: AlmState | None = None
    simulator: Simulator | None = None
    dpo: DpoConfig | None = None
    record_vectors: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown sampler mode {self.mode!r}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"unknown inner solver {self.solver!r}")
        if self.lr is not None and self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.inner_cap < 1:
            raise ConfigError("inner_cap must be >= 1")
        if self.mode == "proximal_latent" and self.decoder is None:
            raise ConfigError("proximal_latent mode requires a decoder")
        con = self.constraint
        if con is not None:
            if con.kind == "porosity" and self.solver != "closed_form":
                raise ConfigError("porosity constraints require the "
                                  "closed_form solver")
            if con.kind == "custom_g" and self.solver == "closed_form":
                raise ConfigError("custom smooth constraints require the alm "
                                  "or dpo solver")
            if self.solver == "closed_form" and not C.has_exact_projection(con):
                raise ConfigError(f"{con.kind} has no exact projection; "
                                  "choose the alm solver")
            if self.solver == "dpo" and (self.simulator is None or self.dpo is None):
                raise ConfigError("dpo solver requires simulator and dpo config")
            if self.solver == "alm" and self.alm is None:
                self.alm = AlmState(tol=con.delta)

    def lr_at(self, t: int) -> float:
        return self.lr if self.lr is not None else 0.1 * self.schedule.gamma_at(t)


def langevin_step(z, score_field: ScoreField, t: int, gamma: float,
                  rng: np.random.Generator,
                  noise_scale: float = 1.0) -> np.ndarray:
    """One step z + gamma * s(z, t) + sqrt(2 gamma) * eps."""
    if gamma <= 0:
        raise ParameterError("gamma must be positive")
    z = np.asarray(z, dtype=float)
    s = score(score_field, z, t)
    eps = rng.standard_normal(z.shape)
    out = z + gamma * s + np.sqrt(2.0 * gamma) * noise_scale * eps
    if not np.isfinite(out).all():
        raise DivergenceError(f"langevin step diverged at level {t}")
    return out


def _constraint_stats(con, x):
    if con is None:
        return float("nan"), float("nan")
    return C.violation(con, x), C.dist_to_set(con, x)


def sample_unconstrained(cfg: SamplerConfig,
                         rng: np.random.Generator) -> tuple[np.ndarray, SampleTrace]:
    """Annealed Langevin dynamics from z_T ~ N(0, I) down to z_0."""
    if cfg.mode != "unconstrained":
        raise ConfigError("config mode must be 'unconstrained'")
    sched = cfg.schedule
    z = rng.standard_normal(cfg.score.dim)
    trace = SampleTrace()
    for t in range(sched.T, 0, -1):
        gamma = sched.gamma_at(t)
        for i in range(1, sched.inner_steps + 1):
            s = score(cfg.score, z, t)
            eps = rng.standard_normal(z.shape)
            z = z + gamma * s + np.sqrt(2.0 * gamma) * cfg.noise_scale * eps
            if not np.isfinite(z).all():
                raise DivergenceError(f"chain diverged at level {t}")
            trace.rows.append(TraceRow(
                t=t, i=i, phase="langevin", gamma=gamma,
                score_norm=float(np.linalg.norm(s)),
                violation=float("nan"), dist=float("nan"),
                z=z.copy() if cfg.record_vectors else None))
    trace.final_latent = z.copy()
    trace.final_sample = z.copy()
    return z, trace


def sample_projected_ambient(cfg: SamplerConfig,
                             rng: np.random.Generator) -> tuple[np.ndarray, SampleTrace]:
    """Projected Langevin dynamics: exact projection after every step."""
    if cfg.mode != "projected_ambient":
        raise ConfigError("config mode must be 'projected_ambient'")
    con = cfg.constraint
    if con is None or not C.has_exact_projection(con):
        raise ConfigError("projected_ambient requires a constraint with an "
                          "exact projection")
    sched = cfg.schedule
    x = rng.standard_normal(cfg.score.dim)
    trace = SampleTrace()
    for t in range(sched.T, 0, -1):
        gamma = sched.gamma_at(t)
        for i in range(1, sched.inner_steps + 1):
            s = score(cfg.score, x, t)
            eps = rng.standard_normal(x.shape)
            x = x + gamma * s + np.sqrt(2.0 * gamma) * cfg.noise_scale * eps
            x = C.project_exact(con, x)
            if not np.isfinite(x).all():
                raise DivergenceError(f"chain diverged at level {t}")
            trace.rows.append(TraceRow(
                t=t, i=i, phase="langevin", gamma=gamma,
                score_norm=float(np.linalg.norm(s)),
                violation=C.violation(con, x), dist=C.dist_to_set(con, x),
                x=x.copy() if cfg.record_vectors else None))
    trace.final_latent = None
    trace.final_sample = x.copy()
    return x, trace


def _correction_direction(cfg: SamplerConfig, x: np.ndarray,
                          rng: np.random.Generator):
    """Ambient gradient of the constraint-correction term at x."""
    con = cfg.constraint
    if cfg.solver == "closed_form":
        return x - C.project_exact(con, x), None
    if cfg.solver == "alm":
        try:
            y, rep = alm_project(x, lambda p: C.violation(con, p),
                                 lambda p: C.violation_gradient(con, p),
                                 cfg.alm)
        except AlmNonConvergence as exc:
            y, rep = exc.report.point, exc.report
        return x - y, rep
    # dpo: smoothed tracking-loss gradient through the simulator
    return dpo_loss_grad(cfg.simulator, x, cfg.dpo, rng=rng), None


def _correction_active(cfg: SamplerConfig, t: int, x0: np.ndarray) -> bool:
    con = cfg.constraint
    if con is None:
        return False
    if cfg.correct_levels is not None:
        lo, hi = cfg.correct_levels
        if not lo <= t <= hi:
            return False
    if con.kind == "surrogate_centroid":
        return C.centroid_trigger(con.model, x0)
    return True


def _run_correction(cfg, z, t, gamma, rng, trace):
    """Inner while-loop of the correction algorithm; returns the new latent."""
    con = cfg.constraint
    dec = cfg.decoder
    x0 = decode(dec, z)
    if not _correction_active(cfg, t, x0):
        return z
    lr = cfg.lr_at(t)
    lam = con.prox_weight
    i = 0
    v = C.violation(con, decode(dec, z))
    while v >= con.delta and i < cfg.inner_cap:
        x = decode(dec, z)
        correction, alm_report = _correction_direction(cfg, x, rng)
        if alm_report is not None:
            trace.alm_reports.append((t, i + 1, alm_report))
        direction = correction + (x - x0) / lam
        z = z - lr * vjp(dec, z, direction)
        if not np.isfinite(z).all():
            raise DivergenceError(f"correction diverged at level {t}")
        i += 1
        x = decode(dec, z)
        v = C.violation(con, x)
        trace.rows.append(TraceRow(
            t=t, i=i, phase="correction", gamma=gamma, score_norm=0.0,
            violation=v, dist=C.dist_to_set(con, x),
            z=z.copy() if cfg.record_vectors else None,
            x=x.copy() if cfg.record_vectors else None))
    if v >= con.delta:
        trace.shortfalls.append((t, i, v))
    return z


def sample_proximal_latent(cfg: SamplerConfig,
                           rng: np.random.Generator) -> tuple[np.ndarray, SampleTrace]:
    """Latent sampler with per-level proximal constraint correction."""
    if cfg.mode != "proximal_latent":
        raise ConfigError("config mode must be 'proximal_latent'")
    sched = cfg.schedule
    dec = cfg.decoder
    con = cfg.constraint
    z = rng.standard_normal(dec.latent_dim)
    trace = SampleTrace()
    for t in range(sched.T, 0, -1):
        gamma = sched.gamma_at(t)
        for i in range(1, sched.inner_steps + 1):
            s = score(cfg.score, z, t)
            eps = rng.standard_normal(z.shape)
            z = z + gamma * s + np.sqrt(2.0 * gamma) * cfg.noise_scale * eps
            if not np.isfinite(z).all():
                raise DivergenceError(f"chain diverged at level {t}")
            x = decode(dec, z)
            v, d = _constraint_stats(con, x)
            trace.rows.append(TraceRow(
                t=t, i=i, phase="langevin", gamma=gamma,
                score_norm=float(np.linalg.norm(s)), violation=v, dist=d,
                z=z.copy() if cfg.record_vectors else None,
                x=x.copy() if cfg.record_vectors else None))
            if cfg.correct_every_step and con is not None:
                z = _run_correction(cfg, z, t, gamma, rng, trace)
        if con is not None and not cfg.correct_every_step:
            z = _run_correction(cfg, z, t, gamma, rng, trace)
    x = decode(dec, z)
    if cfg.final_projection and con is not None and C.has_exact_projection(con):
        x = C.project_exact(con, x)
    trace.final_latent = z.copy()
    trace.final_sample = x.copy()
    return x, trace


def finalize_with_projection(z0, decoder: DecoderMap,
                             constraint: C.ConstraintSpec) -> np.ndarray:
    """Decode and apply the exact ambient projection once."""
    if not C.has_exact_projection(constraint):
        raise ConfigError(
            f"constraint kind {constraint.kind!r} has no exact projection")
    return C.project_exact(constraint, decode(decoder, z0))


def sample(cfg: SamplerConfig, rng: np.random.Generator):
    """Dispatch on the configured mode."""
    if cfg.mode == "unconstrained":
        return sample_unconstrained(cfg, rng)
    if cfg.mode == "projected_ambient":
        return sample_projected_ambient(cfg, rng)
    return sample_proximal_latent(cfg, rng)


def chain_rng(root_seed: int, chain_index: int) -> np.random.Generator:
    """Independent, reproducible stream for one chain of a run."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=root_seed, spawn_key=(chain_index,)))
