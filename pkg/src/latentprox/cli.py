"""Command-line surface: sample, train-score, design, project, diagnose.

Exit codes: 0 success, 2 acceptance-check failure, 3 configuration error,
4 numeric divergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import constraints as C
from .decoders import estimate_lipschitz
from .diagnostics import BoundRecord, BoundReport
from .errors import ConfigError, DivergenceError, NumericError
from .runner import (RunConfig, RunManifest, build_constraint, build_decoder,
                     build_schedule, load_config, run_design, run_experiment)
from .schedules import NoiseSchedule
from .scores import MlpScoreConfig, train_score
from .serialize import load_vector, save_score_field, save_vector

EXIT_OK = 0
EXIT_CHECK_FAILED = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    raw = dict(cfg.data)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["out"] = args.out
    if getattr(args, "chains", None) is not None:
        raw["chains"] = args.chains
    return RunConfig.from_dict(raw)


def _cmd_sample(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    manifest = run_experiment(cfg)
    _print_summary(manifest)
    return EXIT_OK if manifest["ok"] else EXIT_CHECK_FAILED


def _cmd_design(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    manifest = run_design(cfg)
    _print_summary(manifest)
    return EXIT_OK if manifest["ok"] else EXIT_CHECK_FAILED


def _print_summary(manifest: RunManifest) -> None:
    print(f"experiment: {manifest['experiment']}")
    out = Path(manifest["resolved_config"]["out"])
    print(f"manifest:   {out / 'manifest.json'}")
    for name, ok in manifest["checks"].items():
        print(f"check {name}: {'pass' if ok else 'FAIL'}")
    for name, rep in manifest["reports"].items():
        if isinstance(rep, dict) and "fraction_holding" in rep:
            print(f"report {name}: fraction_holding="
                  f"{rep['fraction_holding']:.4f}")


def _cmd_train_score(args) -> int:
    cfg = load_config(args.config)
    schedule = build_schedule(cfg["schedule"])
    seed = int(cfg["seed"]) if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    n = args.samples
    if cfg["score"] is None:
        raise ConfigError("train-score needs a score section describing the "
                          "data distribution")
    from .runner import build_score
    data_field = build_score(cfg["score"], schedule)
    # draw training data from the analytic base distribution
    w, means, covs = data_field.weights, data_field.means, data_field.covs
    comps = rng.choice(len(w), size=n, p=w)
    data = np.empty((n, data_field.dim))
    for k in range(len(w)):
        mask = comps == k
        if mask.any():
            data[mask] = rng.multivariate_normal(means[k], covs[k],
                                                 size=int(mask.sum()))
    mlp_cfg = MlpScoreConfig(hidden=(args.hidden, args.hidden),
                             learning_rate=args.lr, epochs=args.epochs,
                             batch_size=args.batch, seed=seed)
    history: list = []
    field = train_score(data, mlp_cfg, schedule, loss_history=history)
    out = Path(args.out or "score_mlp.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_score_field(field, out)
    first = history[0] if history else float("nan")
    last = history[-1] if history else float("nan")
    print(f"trained score field -> {out} (loss {first:.4f} -> {last:.4f})")
    return EXIT_OK


def _cmd_project(args) -> int:
    cfg = load_config(args.config)
    spec = build_constraint(cfg["constraint"])
    if spec is None:
        raise ConfigError("project needs a constraint section")
    x = load_vector(args.input)
    if args.prox:
        y = C.prox(spec, x, args.weight)
    else:
        y = C.project_exact(spec, x)
    out = Path(args.out or (str(args.input) + ".projected"))
    save_vector(y, out)
    print(f"violation before={C.violation(spec, x):.6g} "
          f"after={C.violation(spec, y):.6g} -> {out}")
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    run_dir = Path(args.run)
    manifest = RunManifest.load(run_dir / "manifest.json")
    cfg = RunConfig.from_dict(manifest["resolved_config"])
    spec = build_constraint(cfg["constraint"])
    decoder = build_decoder(cfg["decoder"])
    schedule = build_schedule(cfg["schedule"])
    if decoder is not None and decoder.lipschitz_bound is None:
        estimate_lipschitz(decoder, int(cfg["decoder"]["lipschitz_probes"]),
                           np.random.default_rng(int(cfg["seed"])))
    rows = _load_metrics(run_dir / "metrics.csv")
    if spec is None or decoder is None:
        print("run has no constraint/decoder; nothing to diagnose")
        return EXIT_OK
    report = _contraction_from_rows(rows, decoder, schedule, args.beta,
                                    smoothness=spec.smoothness)
    print(f"transitions: {len(report.records)}  fraction_holding: "
          f"{report.fraction_holding:.4f}  G: {report.G:.4f}  "
          f"precondition_ok: {report.precondition_ok}")
    threshold = args.min_fraction
    if threshold is not None and report.fraction_holding < threshold:
        return EXIT_CHECK_FAILED
    return EXIT_OK


def _load_metrics(path: Path):
    rows = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            parts = line.strip().split(",")
            rows.append(dict(zip(header, parts)))
    return rows


def _contraction_from_rows(rows, decoder, schedule: NoiseSchedule,
                           beta: float, smoothness: float = 1.0) -> BoundReport:
    """Bound check reconstructed from the stored metrics stream."""
    by_chain: dict = {}
    for r in rows:
        by_chain.setdefault(r["chain"], []).append(r)
    G = max((float(r["score_norm"]) for r in rows
             if r["phase"] == "langevin"), default=0.0)
    ell = decoder.lipschitz_bound
    beta_prime = beta / (ell * smoothness)
    report = BoundReport(G=G, lipschitz=ell, beta=beta, beta_prime=beta_prime,
                         smoothness=smoothness)
    for chain_rows in by_chain.values():
        pre = []
        for k, r in enumerate(chain_rows):
            if r["phase"] != "langevin":
                continue
            nxt = chain_rows[k + 1] if k + 1 < len(chain_rows) else None
            if nxt is None or nxt["phase"] != "langevin" or nxt["t"] != r["t"]:
                pre.append(r)
        for prev, cur in zip(pre[:-1], pre[1:]):
            gamma = float(prev["gamma"])
            lhs = float(cur["dist"]) ** 2
            rhs = (1.0 - 2.0 * beta_prime * gamma) * float(prev["dist"]) ** 2 \
                + gamma ** 2 * G ** 2
            report.records.append(BoundRecord(t=int(cur["t"]), lhs=lhs,
                                              rhs=rhs))
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="latentprox",
        description="Constrained sampling experiments for latent score models")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="run a sampling experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--chains", type=int)
    p.set_defaults(fn=_cmd_sample)

    p = sub.add_parser("design", help="run the simulator design loop")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--chains", type=int)
    p.set_defaults(fn=_cmd_design)

    p = sub.add_parser("train-score", help="train the MLP score model")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--samples", type=int, default=2048)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-2)
    p.set_defaults(fn=_cmd_train_score)

    p = sub.add_parser("project", help="one-shot projection/prox of a vector")
    p.add_argument("--config", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.add_argument("--prox", action="store_true",
                   help="apply the proximal map instead of the projection")
    p.add_argument("--weight", type=float, default=None)
    p.set_defaults(fn=_cmd_project)

    p = sub.add_parser("diagnose", help="bound checks over a stored run")
    p.add_argument("--run", required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--min-fraction", type=float, default=None)
    p.set_defaults(fn=_cmd_diagnose)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, NumericError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
