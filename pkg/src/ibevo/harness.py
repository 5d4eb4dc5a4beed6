"""Experiment orchestration: bound/simulation/baseline commands, manifests.

Every output file is covered by exactly one manifest (a JSON document with
sha256 checksums of the data files it owns). Manifests also echo the
resolved configuration and the derived RNG spawn keys, which is enough to
re-execute any run bit-identically. Wall-clock durations live under the
"timings" key and are the only nondeterministic content in an output tree.

Per-run RNG streams are spawned from (master seed, purpose tag, gamma
index, seed index), so adding gamma values, seeds or baselines never
perturbs existing runs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    SystemEvaluation,
    evaluate_system,
    gamma_beta_table,
    mode_map,
    spearman_rank_correlation,
)
from .baselines import NK99Params, nk99_simulate, sample_meaning_permutation
from .config import ConfigError, ExperimentConfig, config_from_mapping, config_to_mapping
from .domain import DomainParams, build_domain
from .dynamics import simulate, random_population
from .ib_solver import (
    IBCurve,
    IBProblem,
    compute_ib_bound,
    curve_from_csv,
    curve_to_csv,
)
from .probkit import ConditionalDistribution

WORKERS_ENV = "IBEVO_WORKERS"

# Purpose tags for RNG stream derivation.
PURPOSE_RUN_INIT = 1
PURPOSE_IB_INIT = 2
PURPOSE_PERMUTATION = 3
PURPOSE_NK99 = 4
PURPOSE_ANALYSIS = 5

TRAJECTORY_HEADER = ["step", "complexity_bits", "accuracy_bits",
                     "expected_utility", "epsilon_bits", "fitted_beta"]
PLANE_HEADER = ["source_kind", "gamma", "seed", "complexity_bits", "accuracy_bits",
                "epsilon_bits", "fitted_beta", "expected_utility", "converged", "steps"]
PERMUTATION_HEADER = ["gamma", "seed", "tau", "complexity_bits", "accuracy_bits",
                      "epsilon_bits", "fitted_beta"]
NK99_EVAL_HEADER = ["seed", "complexity_bits", "accuracy_bits",
                    "epsilon_bits", "fitted_beta"]
MODE_MAP_HEADER = ["meaning", "modal_word", "modal_prob"]
CORRELATION_HEADER = ["pair", "spearman_rho", "p_value"]
GAMMA_BETA_HEADER = ["gamma", "mean_fitted_beta", "mean_epsilon_bits"]


class MissingInputError(FileNotFoundError):
    """A command needs outputs that have not been produced yet."""


def _fmt(x) -> str:
    if x is None:
        return "nan"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


# ---------------------------------------------------------------------------
# RNG stream derivation.
# ---------------------------------------------------------------------------

def _float_words(x: float) -> tuple[int, int]:
    bits = struct.unpack("<Q", struct.pack("<d", float(x)))[0]
    return bits & 0xFFFFFFFF, bits >> 32


def _grid_position(cfg: ExperimentConfig, gamma: float, seed: int) -> tuple[int, int] | None:
    gammas = cfg.gamma_grid.values()
    gi = np.nonzero(gammas == gamma)[0]
    if gi.size and seed in cfg.seeds:
        return int(gi[0]), cfg.seeds.index(seed)
    return None


def spawn_key(cfg: ExperimentConfig, purpose: int, gamma: float | None,
              seed: int | None, extra: int = 0) -> tuple[int, ...]:
    """Deterministic spawn key for a run's RNG stream.

    On-grid (gamma, seed) pairs are addressed by their grid indices; other
    values are addressed literally (bit pattern of gamma, raw seed), so
    one-off runs are reproducible without being confusable with sweep runs.
    """
    if gamma is None or seed is None:
        return (purpose, 2, extra)
    pos = _grid_position(cfg, gamma, seed)
    if pos is not None:
        return (purpose, 0, pos[0], pos[1], extra)
    lo, hi = _float_words(gamma)
    return (purpose, 1, lo, hi, seed & 0xFFFFFFFF, extra)


def derive_rng(cfg: ExperimentConfig, purpose: int, gamma: float | None = None,
               seed: int | None = None, extra: int = 0) -> np.random.Generator:
    key = spawn_key(cfg, purpose, gamma, seed, extra)
    return np.random.default_rng(np.random.SeedSequence(cfg.master_seed, spawn_key=key))


# ---------------------------------------------------------------------------
# Manifests.
# ---------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(directory: Path, payload: dict, data_files: list[str]) -> Path:
    payload = dict(payload)
    payload["version"] = __version__
    payload["files"] = {name: _sha256(directory / name) for name in sorted(data_files)}
    path = directory / "manifest.json"
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def read_manifest(directory: Path) -> dict:
    with open(Path(directory) / "manifest.json") as fh:
        return json.load(fh)


def verify_manifest(directory: Path) -> list[str]:
    """Return the files whose checksum no longer matches the manifest."""
    directory = Path(directory)
    manifest = read_manifest(directory)
    return [
        name for name, digest in manifest.get("files", {}).items()
        if not (directory / name).exists() or _sha256(directory / name) != digest
    ]


# ---------------------------------------------------------------------------
# CSV writers.
# ---------------------------------------------------------------------------

def write_matrix_csv(path: Path, matrix: np.ndarray) -> None:
    """Dense row-major CSV, 17 significant digits, no header."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in np.atleast_2d(matrix):
            w.writerow([_fmt(v) for v in row])


def read_matrix_csv(path: Path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh)])


def _write_rows(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def _plane_row(ev: SystemEvaluation, converged: bool, steps: int) -> list:
    return [
        ev.source_kind, ev.gamma, ev.seed, ev.complexity_bits, ev.accuracy_bits,
        ev.epsilon_bits, ev.fitted_beta, ev.expected_utility,
        int(bool(converged)), int(steps),
    ]


# ---------------------------------------------------------------------------
# IB bound command.
# ---------------------------------------------------------------------------

def _bound_identity(cfg: ExperimentConfig) -> dict:
    echo = config_to_mapping(cfg)
    return {
        "master_seed": cfg.master_seed,
        "domain": {k: v for k, v in echo["domain"].items() if k != "gamma"},
        "ib": echo["ib"],
        "version": __version__,
    }


def cmd_ib_bound(cfg: ExperimentConfig, out_dir: Path) -> Path:
    """Compute the frontier and write curve.csv + manifest; idempotent."""
    bound_dir = Path(out_dir) / "ib_bound"
    identity = _bound_identity(cfg)
    if (bound_dir / "manifest.json").exists():
        manifest = read_manifest(bound_dir)
        if manifest.get("identity") == identity and not verify_manifest(bound_dir):
            return bound_dir
    bound_dir.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    domain = build_domain(DomainParams(
        n=cfg.domain.n, gamma=cfg.domain.gamma, alpha=cfg.domain.alpha,
        prior_kind=cfg.domain.prior_kind,
    ))
    problem = IBProblem(need=domain.prior, belief_channel=domain.confusion)
    curve = compute_ib_bound(
        problem,
        cfg.ib.schedule(),
        tol=cfg.ib.tol,
        max_rounds=cfg.ib.max_rounds,
        stationary_tol=cfg.ib.stationary_tol,
        rng=derive_rng(cfg, PURPOSE_IB_INIT),
        keep_encoders=False,
    )
    curve_to_csv(curve, bound_dir / "curve.csv")
    write_manifest(bound_dir, {
        "kind": "ib_bound",
        "identity": identity,
        "ceiling_bits": curve.ceiling,
        "n_points": len(curve.points),
        "solver": {
            "tol": cfg.ib.tol,
            "max_rounds": cfg.ib.max_rounds,
            "stationary_tol": cfg.ib.stationary_tol,
            "rounds": [p.rounds for p in curve.points],
            "strict_converged": [bool(p.converged) for p in curve.points],
        },
        "rng": {"spawn_key": list(spawn_key(cfg, PURPOSE_IB_INIT, None, None))},
        "timings": {"wall_seconds": time.perf_counter() - t0},
    }, ["curve.csv"])
    return bound_dir


def ensure_bound(cfg: ExperimentConfig, out_dir: Path) -> tuple[IBCurve, Path]:
    bound_dir = cmd_ib_bound(cfg, out_dir)
    manifest = read_manifest(bound_dir)
    curve = curve_from_csv(bound_dir / "curve.csv", ceiling=manifest["ceiling_bits"])
    return curve, bound_dir


# ---------------------------------------------------------------------------
# Single simulation run.
# ---------------------------------------------------------------------------

def _run_dir_name(cfg: ExperimentConfig, gamma: float, seed: int) -> str:
    pos = _grid_position(cfg, gamma, seed)
    if pos is not None:
        return f"run_g{pos[0]:03d}_s{pos[1]:02d}"
    return f"run_gamma{gamma:.10g}_seed{seed}"


def run_simulation(cfg: ExperimentConfig, gamma: float, seed: int,
                   out_dir: Path, curve: IBCurve) -> dict:
    """Execute one (gamma, seed) run and persist its artifacts.

    Returns a summary dict (also stored in the run manifest) used by the
    sweep aggregation.
    """
    t0 = time.perf_counter()
    run_dir = Path(out_dir) / "runs" / _run_dir_name(cfg, gamma, seed)
    run_dir.mkdir(parents=True, exist_ok=True)

    domain = build_domain(DomainParams(
        n=cfg.domain.n, gamma=gamma, alpha=cfg.domain.alpha,
        prior_kind=cfg.domain.prior_kind,
    ))
    rng = derive_rng(cfg, PURPOSE_RUN_INIT, gamma, seed)
    init = random_population(domain.n, rng)
    result = simulate(domain, cfg.sim, init, curve=curve)

    problem = IBProblem(need=domain.prior, belief_channel=domain.confusion)
    ev = evaluate_system(
        result.final.sender, problem, curve, domain, result.final.receiver,
        gamma=gamma, seed=seed, source_kind="imitation",
    )

    _write_rows(run_dir / "trajectory.csv", TRAJECTORY_HEADER, [
        [r.step, r.complexity_bits, r.accuracy_bits, r.expected_utility,
         r.epsilon_bits, r.fitted_beta]
        for r in result.trajectory
    ])
    write_matrix_csv(run_dir / "sender.csv", result.final.sender.rows)
    write_matrix_csv(run_dir / "receiver.csv", result.final.receiver.rows)
    _write_rows(run_dir / "evaluation.csv", PLANE_HEADER,
                [_plane_row(ev, result.converged, result.steps_taken)])
    mm = mode_map(result.final.sender)
    _write_rows(run_dir / "mode_map.csv", MODE_MAP_HEADER, [
        [m, int(mm.modal_word[m]), mm.modal_prob[m]] for m in range(domain.n)
    ])

    summary = {
        "kind": "imitation",
        "gamma": gamma,
        "seed": seed,
        "converged": result.converged,
        "steps": result.steps_taken,
        "complexity_bits": ev.complexity_bits,
        "accuracy_bits": ev.accuracy_bits,
        "epsilon_bits": ev.epsilon_bits,
        "fitted_beta": ev.fitted_beta,
        "expected_utility": ev.expected_utility,
        "run_dir": run_dir.name,
    }
    write_manifest(run_dir, {
        "kind": "run",
        "baseline_kind": "imitation",
        "summary": summary,
        "config": config_to_mapping(cfg),
        "rng": {"spawn_key": list(spawn_key(cfg, PURPOSE_RUN_INIT, gamma, seed))},
        "timings": {"wall_seconds": time.perf_counter() - t0},
    }, ["trajectory.csv", "sender.csv", "receiver.csv", "evaluation.csv", "mode_map.csv"])
    return summary


def cmd_simulate(cfg: ExperimentConfig, gamma: float, seed: int, out_dir: Path) -> Path:
    """Run one simulation against the (possibly precomputed) bound."""
    curve, _ = ensure_bound(cfg, out_dir)
    summary = run_simulation(cfg, gamma, seed, out_dir, curve)
    return Path(out_dir) / "runs" / summary["run_dir"]


# ---------------------------------------------------------------------------
# Sweep.
# ---------------------------------------------------------------------------

def resolve_workers(requested: int | None) -> int:
    if requested is not None:
        return max(1, requested)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"{WORKERS_ENV}={env!r} is not an integer") from exc
    return os.cpu_count() or 1


def _sweep_task(args: tuple) -> dict:
    cfg_map, gamma, seed, out_dir, curve_path, ceiling = args
    cfg = config_from_mapping(cfg_map)
    curve = curve_from_csv(curve_path, ceiling=ceiling)
    try:
        return run_simulation(cfg, gamma, seed, Path(out_dir), curve)
    except Exception as exc:  # noqa: BLE001 - reported in the sweep summary
        return {"kind": "error", "gamma": gamma, "seed": seed, "error": repr(exc)}


@dataclass(frozen=True)
class SweepReport:
    sweep_dir: Path
    n_runs: int
    failed: tuple[dict, ...]


def cmd_sweep(cfg: ExperimentConfig, out_dir: Path, workers: int | None = None) -> SweepReport:
    """Run the full (gamma x seed) grid, then baselines and aggregation."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    curve, bound_dir = ensure_bound(cfg, out_dir)

    gammas = cfg.gamma_grid.values()
    tasks = [
        (config_to_mapping(cfg), float(g), int(s), str(out_dir),
         str(bound_dir / "curve.csv"), curve.ceiling)
        for g in gammas for s in cfg.seeds
    ]
    n_workers = resolve_workers(workers)
    if n_workers == 1 or len(tasks) == 1:
        results = [_sweep_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_sweep_task, tasks))

    failed = tuple(r for r in results if r["kind"] == "error")
    succeeded = [r for r in results if r["kind"] != "error"]

    if any(r["converged"] for r in succeeded):
        cmd_baselines(cfg, out_dir)
    cmd_analyze(out_dir, cfg)

    write_manifest(out_dir, {
        "kind": "sweep",
        "config": config_to_mapping(cfg),
        "n_runs": len(tasks),
        "n_failed": len(failed),
        "failed": list(failed),
        "children": ["ib_bound/manifest.json"]
        + sorted(f"runs/{r['run_dir']}/manifest.json" for r in succeeded)
        + (["baselines/manifest.json"] if (out_dir / "baselines").exists() else [])
        + ["analysis/manifest.json"],
        "timings": {"wall_seconds": time.perf_counter() - t0},
    }, [])
    return SweepReport(sweep_dir=out_dir, n_runs=len(tasks), failed=failed)


# ---------------------------------------------------------------------------
# Baselines.
# ---------------------------------------------------------------------------

def _load_converged_runs(cfg: ExperimentConfig, sweep_dir: Path) -> list[dict]:
    runs_dir = Path(sweep_dir) / "runs"
    if not runs_dir.is_dir():
        raise MissingInputError(f"no runs directory under {sweep_dir}")
    out = []
    for run_dir in sorted(runs_dir.iterdir()):
        if not (run_dir / "manifest.json").exists():
            continue
        summary = read_manifest(run_dir)["summary"]
        if summary["kind"] == "imitation" and summary["converged"]:
            out.append({**summary, "path": run_dir})
    if not out:
        raise MissingInputError(f"no converged systems found under {runs_dir}")
    return out


def cmd_baselines(cfg: ExperimentConfig, sweep_dir: Path) -> Path:
    """Permute every converged encoder over the tau grid and run NK99."""
    sweep_dir = Path(sweep_dir)
    t0 = time.perf_counter()
    curve, _ = ensure_bound(cfg, sweep_dir)
    runs = _load_converged_runs(cfg, sweep_dir)

    domain = build_domain(DomainParams(
        n=cfg.domain.n, gamma=cfg.domain.gamma, alpha=cfg.domain.alpha,
        prior_kind=cfg.domain.prior_kind,
    ))
    problem = IBProblem(need=domain.prior, belief_channel=domain.confusion)

    base_dir = sweep_dir / "baselines"
    base_dir.mkdir(parents=True, exist_ok=True)
    data_files = []

    perm_rows = []
    taus = cfg.baselines.tau_grid.values()
    for run in runs:
        encoder = ConditionalDistribution(read_matrix_csv(run["path"] / "sender.csv"))
        for ti, tau in enumerate(taus):
            rng = derive_rng(cfg, PURPOSE_PERMUTATION, run["gamma"], run["seed"], extra=ti)
            pi = sample_meaning_permutation(encoder.n_cond, float(tau), rng)
            permuted = ConditionalDistribution(encoder.rows[pi, :])
            ev = evaluate_system(permuted, problem, curve,
                                 gamma=run["gamma"], seed=run["seed"],
                                 source_kind="permutation")
            perm_rows.append([run["gamma"], run["seed"], float(tau),
                              ev.complexity_bits, ev.accuracy_bits,
                              ev.epsilon_bits, ev.fitted_beta])
    _write_rows(base_dir / "permutations.csv", PERMUTATION_HEADER, perm_rows)
    data_files.append("permutations.csv")

    nk_dir = base_dir / "nk99"
    nk_dir.mkdir(exist_ok=True)
    nk_rows = []
    for si, seed in enumerate(cfg.seeds):
        params = NK99Params(
            pop_size=cfg.baselines.nk99.pop_size,
            generations=cfg.baselines.nk99.generations,
            samples=cfg.baselines.nk99.samples,
            n_meanings=cfg.domain.n,
            n_words=cfg.domain.n,
            seed=seed,
        )
        rng = derive_rng(cfg, PURPOSE_NK99, None, None, extra=si)
        mean_sender, fitness = nk99_simulate(params, rng)
        ev = evaluate_system(mean_sender, problem, curve,
                             seed=seed, source_kind="nk99")
        write_matrix_csv(nk_dir / f"mean_sender_s{si:02d}.csv", mean_sender.rows)
        _write_rows(nk_dir / f"fitness_s{si:02d}.csv", ["generation", "mean_fitness"],
                    [[g, f] for g, f in enumerate(fitness)])
        data_files += [f"nk99/mean_sender_s{si:02d}.csv", f"nk99/fitness_s{si:02d}.csv"]
        nk_rows.append([seed, ev.complexity_bits, ev.accuracy_bits,
                        ev.epsilon_bits, ev.fitted_beta])
    _write_rows(base_dir / "nk99_evaluations.csv", NK99_EVAL_HEADER, nk_rows)
    data_files.append("nk99_evaluations.csv")

    write_manifest(base_dir, {
        "kind": "baselines",
        "baseline_kinds": ["permutation", "nk99"],
        "n_source_systems": len(runs),
        "tau_grid": {"count": cfg.baselines.tau_grid.count,
                     "lo": cfg.baselines.tau_grid.lo, "hi": cfg.baselines.tau_grid.hi},
        "nk99": config_to_mapping(cfg)["baselines"]["nk99"],
        "timings": {"wall_seconds": time.perf_counter() - t0},
    }, data_files)
    return base_dir


# ---------------------------------------------------------------------------
# Aggregation.
# ---------------------------------------------------------------------------

def _read_csv_dicts(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_analyze(sweep_dir: Path, cfg: ExperimentConfig | None = None) -> Path:
    """Build the plane table, gamma-beta table and correlation report."""
    sweep_dir = Path(sweep_dir)
    t0 = time.perf_counter()
    if cfg is None:
        manifest = read_manifest(sweep_dir)
        cfg = config_from_mapping(manifest["config"])

    runs_dir = sweep_dir / "runs"
    if not runs_dir.is_dir():
        raise MissingInputError(f"no runs directory under {sweep_dir}")
    plane_rows = []
    imitation = []
    for run_dir in sorted(runs_dir.iterdir()):
        eval_path = run_dir / "evaluation.csv"
        if not eval_path.exists():
            continue
        for row in _read_csv_dicts(eval_path):
            plane_rows.append([row[k] for k in PLANE_HEADER])
            imitation.append({k: float(v) if k not in ("source_kind",) else v
                              for k, v in row.items()})

    base_dir = sweep_dir / "baselines"
    permutations = []
    nk99_rows = []
    if base_dir.is_dir():
        for row in _read_csv_dicts(base_dir / "permutations.csv"):
            permutations.append({k: float(v) for k, v in row.items()})
            plane_rows.append(["permutation", row["gamma"], row["seed"],
                               row["complexity_bits"], row["accuracy_bits"],
                               row["epsilon_bits"], row["fitted_beta"],
                               "nan", "1", "0"])
        for row in _read_csv_dicts(base_dir / "nk99_evaluations.csv"):
            nk99_rows.append({k: float(v) for k, v in row.items()})
            plane_rows.append(["nk99", "nan", row["seed"],
                               row["complexity_bits"], row["accuracy_bits"],
                               row["epsilon_bits"], row["fitted_beta"],
                               "nan", "1", _fmt(int(cfg.baselines.nk99.generations))])

    analysis_dir = sweep_dir / "analysis"
    analysis_dir.mkdir(exist_ok=True)
    _write_rows(analysis_dir / "plane.csv", PLANE_HEADER, plane_rows)

    converged = [r for r in imitation if r["converged"] == 1.0]
    evals = [
        SystemEvaluation(
            complexity_bits=r["complexity_bits"], accuracy_bits=r["accuracy_bits"],
            expected_utility=r["expected_utility"], epsilon_bits=r["epsilon_bits"],
            fitted_beta=r["fitted_beta"], gamma=r["gamma"], seed=int(r["seed"]),
            source_kind="imitation",
        )
        for r in converged
    ]
    table = gamma_beta_table(evals) if evals else []
    _write_rows(analysis_dir / "gamma_beta.csv", GAMMA_BETA_HEADER,
                [[g, b, e] for g, b, e in table])

    corr_rows = []
    if len(converged) >= 3:
        rng = derive_rng(cfg, PURPOSE_ANALYSIS)
        gammas = [r["gamma"] for r in converged]
        for name, key in [("complexity", "complexity_bits"),
                          ("accuracy", "accuracy_bits"),
                          ("fitted_beta", "fitted_beta"),
                          ("epsilon", "epsilon_bits")]:
            rho, p = spearman_rank_correlation(
                gammas, [r[key] for r in converged], rng=rng)
            corr_rows.append([f"gamma_vs_{name}", rho, p])
    _write_rows(analysis_dir / "correlations.csv", CORRELATION_HEADER, corr_rows)

    write_manifest(analysis_dir, {
        "kind": "analysis",
        "n_plane_rows": len(plane_rows),
        "n_imitation": len(imitation),
        "n_permutation": len(permutations),
        "n_nk99": len(nk99_rows),
        "timings": {"wall_seconds": time.perf_counter() - t0},
    }, ["plane.csv", "gamma_beta.csv", "correlations.csv"])
    return analysis_dir
