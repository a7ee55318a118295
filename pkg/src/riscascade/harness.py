"""Monte Carlo NMSE experiments over SNR and pilot-budget sweeps.

A trial draws one scene, one Stage I block and one Stage II block per user,
then runs every enabled method on those blocks. Seeds are derived from the
master seed and the trial index only, so every cell of a sweep sees the
same scenes, codebooks and (scaled) noise draws.

Pilot accounting: the proposed method spends ``V`` shared Stage I slots and
``tau`` slots per user, i.e. ``T = (V + K*tau) / K`` per user on average.
Direct-OMP and the genie get ``round(T)`` slots per user so that all methods
in a cell have the same average overhead. Their block is the same
realisation as the proposed method's, extended: its first ``tau`` slots are
byte-identical to the block the proposed method sees.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .baselines import BaselineConfig, direct_omp_estimate, genie_ls_estimate
from .channel import ArrayGeometry, sample_scene
from .codebook import stage1_codebook, stage2_codebook
from .errors import ConfigurationError, PilotBudgetError, RisError, UndefinedMetricError
from .stage2 import EstimatorConfig, estimate_all
from .transmission import calibrate_noise, simulate_stage1_rx, simulate_stage2_rx
from .truth import true_aoa

__all__ = [
    "METHODS",
    "PRESETS",
    "ExperimentConfig",
    "SweepRow",
    "SweepReport",
    "load_config",
    "pilot_overhead",
    "nmse",
    "run_trial",
    "sweep",
    "emit_csv",
    "CSV_HEADER",
]

METHODS = ("proposed", "direct_omp", "genie")
SWEEPS = ("snr", "pilots")
SCENE_MODES = ("redraw_per_trial", "fixed_scene")
CSV_HEADER = ("method", "T", "snr_db", "mean_nmse", "std_nmse", "trials", "config_hash")
SNR_CONVENTION = (
    "SNR = mean |noiseless received entry|^2 / noise power, with the signal power "
    "pooled over the Stage II blocks of all users in the trial (longest block of the "
    "sweep); the same noise power is applied to Stage I"
)
PILOT_FORMULA = "T = (V + sum_k tau_k) / K; baselines use round(T) slots per user"

PRESETS = {
    "desk": dict(
        n_bs=64, n_ris=64, k_users=4, l_paths=3, j_paths=2,
        v_slots=16, tau_per_user=8, tau_list=(4, 6, 8, 12, 16), trials=200,
    ),
    "paper": dict(
        n_bs=100, n_ris=100, k_users=16, l_paths=5, j_paths=4,
        v_slots=64, tau_per_user=8, tau_list=(4, 6, 8, 12, 16), trials=200,
    ),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a sweep.

    ``snr_db`` is the SNR of pilot sweeps and of single trials;
    ``snr_db_list`` is the axis of SNR sweeps. ``tau_per_user`` likewise
    fixes the Stage II length of SNR sweeps, and ``tau_list`` is the pilot
    sweep axis. ``angle_grid`` puts every scene angle on a grid of that
    size, ``exact_aoa`` injects the true BS AoAs into Stage I, and an SNR
    of ``inf`` means noiseless. ``workers`` only affects run time.
    """

    n_bs: int = 64
    n_ris: int = 64
    k_users: int = 4
    l_paths: int = 3
    j_paths: int = 2
    distances: tuple = (10.0, 100.0)
    v_slots: int = 16
    tau_per_user: int = 8
    tau_list: tuple = (4, 6, 8, 12, 16)
    snr_db: float = -5.0
    snr_db_list: tuple = (-10.0, -5.0, 0.0, 5.0, 10.0)
    trials: int = 200
    seed: int = 0
    methods: tuple = METHODS
    dict_size: Optional[int] = None
    grid_n: Optional[int] = None
    grid_m: Optional[int] = None
    scene_mode: str = "redraw_per_trial"
    angle_grid: Optional[int] = None
    min_separation: Optional[float] = None
    exact_aoa: bool = False
    whiten: bool = True
    workers: int = field(default=1, compare=False)

    def __post_init__(self):
        for name in ("distances", "tau_list", "snr_db_list", "methods"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "snr_db", float(self.snr_db))
        object.__setattr__(self, "snr_db_list", tuple(float(s) for s in self.snr_db_list))
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.v_slots < self.l_paths:
            raise PilotBudgetError(
                f"stage I needs V >= L, got V={self.v_slots}, L={self.l_paths}"
            )
        if self.v_slots > self.n_ris:
            raise ConfigurationError(f"V={self.v_slots} exceeds the RIS size {self.n_ris}")
        if min((self.tau_per_user,) + self.tau_list) < 1:
            raise ConfigurationError("stage II lengths must be >= 1")
        if not self.methods or set(self.methods) - set(METHODS):
            raise ConfigurationError(f"methods must be a non-empty subset of {METHODS}")
        if self.scene_mode not in SCENE_MODES:
            raise ConfigurationError(f"scene_mode must be one of {SCENE_MODES}")
        if len(self.distances) != 2:
            raise ConfigurationError("distances must be (BS-RIS, RIS-user)")
        if self.seed < 0 or self.workers < 1:
            raise ConfigurationError("seed must be >= 0 and workers >= 1")
        # fails early on impossible geometry
        ArrayGeometry(self.n_bs, self.n_ris)

    @classmethod
    def from_dict(cls, values, preset=None):
        """Build from a flat mapping layered over ``preset``; unknown keys are rejected."""
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {', '.join(unknown)}")
        merged = {}
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigurationError(f"unknown preset {preset!r}")
            merged.update(PRESETS[preset])
        merged.update(values)
        return cls(**merged)

    def as_dict(self):
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @property
    def config_hash(self):
        """SHA-256 of the canonical JSON of every result-relevant field."""
        d = self.as_dict()
        d.pop("workers")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def geometry(self):
        return ArrayGeometry(self.n_bs, self.n_ris)

    def baseline_slots(self, tau):
        return max(1, int(round(pilot_overhead(self.v_slots, self.k_users, tau))))

    def max_slots(self):
        """Longest Stage II block any cell of either sweep can ask for."""
        taus = (self.tau_per_user,) + self.tau_list
        return max(max(t, self.baseline_slots(t)) for t in taus)


def load_config(path=None, preset=None, **overrides):
    """Read a flat JSON object and layer it (then ``overrides``) over ``preset``."""
    values = {}
    if path is not None:
        path = Path(path)
        try:
            values = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(values, dict):
            raise ConfigurationError(f"config {path} must hold a JSON object")
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(values, preset=preset)


def pilot_overhead(v_slots, k_users, tau_per_user):
    """Average per-user pilot count ``(V + sum_k tau_k) / K``.

    ``tau_per_user`` is a scalar (same for every user) or one value per user.
    """
    taus = np.broadcast_to(np.asarray(tau_per_user, dtype=float), (k_users,))
    return (v_slots + float(np.sum(taus))) / k_users


def nmse(estimates, truths):
    """``sum_k ||G_hat_k - G_k||_F^2 / sum_k ||G_k||_F^2`` for one trial."""
    estimates = list(estimates)
    truths = list(truths)
    if not truths or len(estimates) != len(truths):
        raise ConfigurationError("need equally many estimates and truths, at least one")
    err = 0.0
    ref = 0.0
    for g_hat, g in zip(estimates, truths):
        g_hat = np.asarray(g_hat)
        g = np.asarray(g)
        if g_hat.shape != g.shape:
            raise ConfigurationError(f"estimate {g_hat.shape} and truth {g.shape} differ in shape")
        err += float(np.sum(np.abs(g_hat - g) ** 2))
        ref += float(np.sum(np.abs(g) ** 2))
    if not ref > 0:
        raise UndefinedMetricError("NMSE is undefined when every true channel is zero")
    return err / ref


def _child(ss, *key):
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + key)


def _trial_seed(config, trial_index):
    return _child(np.random.SeedSequence(config.seed), 1, trial_index)


def _scene_seed(config, trial_seed):
    if config.scene_mode == "fixed_scene":
        return _child(np.random.SeedSequence(config.seed), 0)
    return _child(trial_seed, 0)


class _Trial:
    """Scene, codebooks and noise of one trial, shared by every cell."""

    def __init__(self, config, trial_seed):
        if isinstance(trial_seed, (int, np.integer)):
            trial_seed = np.random.SeedSequence(int(trial_seed))
        self.config = config
        self.seed = trial_seed
        self.scene = sample_scene(
            config.geometry(),
            config.k_users,
            config.l_paths,
            config.j_paths,
            config.distances,
            seed=_scene_seed(config, trial_seed),
            min_separation=config.min_separation,
            grid=config.angle_grid,
        )
        m = config.n_ris
        self.slots = config.max_slots()
        self.cb1 = stage1_codebook(m, config.v_slots)
        self.cb2 = [
            stage2_codebook(m, self.slots, seed=_child(trial_seed, 1, k))
            for k in range(config.k_users)
        ]
        self.signal_power_ref = calibrate_noise(self.scene, self.cb2, 0.0)

    def blocks(self, snr_db):
        if snr_db == math.inf:
            noise = 0.0
        else:
            noise = self.signal_power_ref / 10.0 ** (snr_db / 10.0)
        rx1 = simulate_stage1_rx(self.scene, self.cb1, noise, seed=_child(self.seed, 2))
        rx2 = [
            simulate_stage2_rx(self.scene, k, cb, noise, seed=_child(self.seed, 3, k))
            for k, cb in enumerate(self.cb2)
        ]
        return rx1, rx2


def _evaluate(trial, snr_db, tau, methods):
    config = trial.config
    scene = trial.scene
    rx1, rx2 = trial.blocks(snr_db)
    t_base = config.baseline_slots(tau)
    out = {}
    failures = []
    for method in methods:
        try:
            if method == "proposed":
                est_cfg = EstimatorConfig(
                    l_paths=config.l_paths,
                    sparsity=config.j_paths,
                    dict_size=config.dict_size,
                    whiten=config.whiten,
                    aoa=true_aoa(scene) if config.exact_aoa else None,
                )
                est = estimate_all(
                    rx1,
                    [b.prefix(tau) for b in rx2],
                    trial.cb1,
                    [cb.prefix(tau) for cb in trial.cb2],
                    est_cfg,
                )
                g_hat = est.cascaded
            elif method == "direct_omp":
                base = BaselineConfig("direct_omp", config.grid_n, config.grid_m,
                                      config.l_paths * config.j_paths)
                g_hat = [
                    direct_omp_estimate(b.prefix(t_base), cb.prefix(t_base), base)
                    for b, cb in zip(rx2, trial.cb2)
                ]
            else:
                g_hat = [
                    genie_ls_estimate(b.prefix(t_base), cb.prefix(t_base), scene)
                    for b, cb in zip(rx2, trial.cb2)
                ]
            out[method] = nmse(g_hat, scene.cascaded)
        except (RisError, ValueError, np.linalg.LinAlgError) as exc:
            out[method] = math.nan
            failures.append((method, type(exc).__name__, str(exc)))
    return out, failures


def run_trial(config, trial_seed, snr_db=None, tau=None, methods=None):
    """NMSE of every enabled method on one trial.

    ``snr_db`` and ``tau`` default to ``config.snr_db`` and
    ``config.tau_per_user``. Estimator failures give NaN instead of raising.
    """
    snr_db = config.snr_db if snr_db is None else float(snr_db)
    tau = config.tau_per_user if tau is None else int(tau)
    trial = _Trial(config, trial_seed)
    return _evaluate(trial, snr_db, tau, methods or config.methods)[0]


@dataclass(frozen=True)
class SweepRow:
    method: str
    T: float
    snr_db: float
    mean_nmse: float
    std_nmse: float
    trials: int
    config_hash: str


@dataclass(frozen=True)
class SweepReport:
    """Aggregated sweep cells plus per-trial values and recorded failures.

    ``values[(method, T, snr_db)]`` holds one NMSE per trial (NaN on
    failure), in trial order. ``trials`` in a row counts successful trials.
    """

    rows: tuple
    kind: str = "snr"
    config: Optional[ExperimentConfig] = None
    values: dict = field(default_factory=dict, repr=False)
    failures: tuple = ()

    def row(self, method, T=None, snr_db=None):
        hits = [
            r for r in self.rows
            if r.method == method and (T is None or r.T == T) and (snr_db is None or r.snr_db == snr_db)
        ]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {(method, T, snr_db)}")
        return hits[0]

    def series(self, method):
        return [r for r in self.rows if r.method == method]


def _cells(config, kind):
    if kind == "snr":
        return [(s, config.tau_per_user) for s in config.snr_db_list]
    if kind == "pilots":
        return [(config.snr_db, t) for t in config.tau_list]
    raise ConfigurationError(f"sweep kind must be one of {SWEEPS}")


def _run_trial_cells(args):
    config, index, cells = args
    trial = _Trial(config, _trial_seed(config, index))
    results = []
    for snr_db, tau in cells:
        values, failures = _evaluate(trial, snr_db, tau, config.methods)
        results.append((values, [(index, snr_db, tau) + f for f in failures]))
    return results


def sweep(config, kind="snr"):
    """Run ``config.trials`` trials on every cell of an SNR or pilot sweep.

    Trials run in ``config.workers`` processes; the reduction is done in
    trial order so the report does not depend on scheduling.
    """
    cells = _cells(config, kind)
    jobs = [(config, i, cells) for i in range(config.trials)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            per_trial = list(pool.map(_run_trial_cells, jobs, chunksize=4))
    else:
        per_trial = [_run_trial_cells(job) for job in jobs]

    digest = config.config_hash
    order = {m: i for i, m in enumerate(METHODS)}
    rows = []
    values = {}
    failures = []
    for c, (snr_db, tau) in enumerate(cells):
        t_prop = pilot_overhead(config.v_slots, config.k_users, tau)
        t_base = float(config.baseline_slots(tau))
        for method in config.methods:
            t = t_prop if method == "proposed" else t_base
            v = np.array([per_trial[i][c][0][method] for i in range(config.trials)])
            ok = v[np.isfinite(v)]
            mean = float(np.mean(ok)) if ok.size else math.nan
            std = float(np.std(ok, ddof=1)) if ok.size > 1 else 0.0 if ok.size else math.nan
            rows.append(SweepRow(method, t, snr_db, mean, std, int(ok.size), digest))
            values[(method, t, snr_db)] = v
        for i in range(config.trials):
            failures.extend(per_trial[i][c][1])
    rows.sort(key=lambda r: (order[r.method], r.T, r.snr_db))
    return SweepReport(tuple(rows), kind, config, values, tuple(failures))


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def emit_csv(report, path, seed=None):
    """Write the report as CSV plus a ``.meta.json`` sidecar next to it.

    Floats use ``repr`` (shortest round-trip form). Both files are UTF-8
    with LF line endings and contain nothing run-dependent beyond the
    report, so equal reports give byte-identical files.
    """
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for r in report.rows:
                writer.writerow([_fmt(getattr(r, name)) for name in CSV_HEADER])
        meta = _metadata(report, seed)
        meta_path = path.with_suffix(".meta.json")
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path


def _metadata(report, seed):
    meta = {
        "sweep": report.kind,
        "rows": len(report.rows),
        "snr_convention": SNR_CONVENTION,
        "pilot_formula": PILOT_FORMULA,
        "failed_trials": len(report.failures),
    }
    config = report.config
    if config is not None:
        meta.update(
            config=config.as_dict(),
            config_hash=config.config_hash,
            seed=config.seed if seed is None else seed,
            grids={
                "dict_size": config.dict_size or 2 * config.n_ris,
                "grid_n": config.grid_n or 2 * config.n_bs,
                "grid_m": config.grid_m or 2 * config.n_ris,
            },
        )
        meta["config"].pop("workers")
    return meta
