"""Noise-sweep experiment harness: trials, metrics, CSV/JSON output."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import struct
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, baselines, kbk, sim, spectrum
from ._backend import NAME as BACKEND_NAME
from .embed import Observable, build_blocks, flatten_blocks, observable_series
from .errors import ConfigError, KoopmanError

log = logging.getLogger(__name__)

ALL_METHODS = ("dmd", "tdmd", "fbdmd", "kbk")
DEFAULT_VARIANCES = (1e-4, 1e-3, 1e-2, 1e-1)
RESULTS_HEADER = ["system", "method", "noise_var", "trial", "E1", "E2", "iterations", "runtime_ms", "failed"]
EIGS_HEADER = ["system", "method", "noise_var", "trial", "eig_index", "re", "im"]
SUBSTEPS = 10
E2_CONVENTIONS = {
    "kbk": "flattened RTS-smoothed block means",
    "baselines": "free run z_1 = y_1, z_{k+1} = A z_k, flattened",
}


@dataclass
class ExperimentConfig:
    system: sim.BenchmarkSystem
    N: int
    Ts: float
    M: int = 4
    observable: Observable = Observable.X1
    noise_variances: tuple = DEFAULT_VARIANCES
    trials: int = 50
    methods: tuple = ALL_METHODS
    seed: int = 0
    em: kbk.EMConfig = field(default_factory=kbk.EMConfig)
    output_dir: Path | None = None
    x0: tuple | None = None

    def __post_init__(self):
        self.system = sim.BenchmarkSystem(self.system)
        self.observable = Observable(self.observable)
        self.noise_variances = tuple(float(v) for v in self.noise_variances)
        self.methods = tuple(self.methods)
        if self.x0 is None:
            self.x0 = sim.DEFAULT_X0[self.system]
        self.x0 = tuple(float(v) for v in self.x0)
        self.validate()

    def validate(self):
        if self.M < 2:
            raise ConfigError(f"M must be >= 2, got {self.M}")
        if self.N < 2 * self.M:
            raise ConfigError(f"N={self.N} must be at least 2*M={2 * self.M}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.methods:
            raise ConfigError("at least one method is required")
        unknown = set(self.methods) - set(ALL_METHODS)
        if unknown:
            raise ConfigError(f"unknown methods: {sorted(unknown)}")
        if not self.Ts > 0:
            raise ConfigError("Ts must be positive")
        if any(not v >= 0 for v in self.noise_variances):
            raise ConfigError("noise variances must be non-negative")
        if len(self.x0) != self.system.dimension:
            raise ConfigError(f"x0 must have {self.system.dimension} entries")

    def to_dict(self):
        d = asdict(self)
        d["system"] = self.system.value
        d["observable"] = self.observable.value
        d["output_dir"] = None if self.output_dir is None else str(self.output_dir)
        d["noise_variances"] = list(self.noise_variances)
        d["methods"] = list(self.methods)
        d["x0"] = list(self.x0)
        return d


@dataclass
class TrialRecord:
    system: str
    method: str
    noise_variance: float
    trial_index: int
    E1: float
    E2: float
    iterations: int
    runtime_ms: float
    seed_used: int
    eigenvalues: list = field(default_factory=list)
    failed: bool = False
    error: str = ""
    input_checksum: str = ""


def default_configs() -> dict:
    """Reference experiment configurations keyed by system."""
    S = sim.BenchmarkSystem
    return {
        S.RealSpectrum: ExperimentConfig(S.RealSpectrum, N=30, Ts=0.2, M=4, observable=Observable.X2),
        S.ImaginarySpectrum: ExperimentConfig(S.ImaginarySpectrum, N=60, Ts=0.1, M=4, observable=Observable.X1),
        S.ComplexSpectrum: ExperimentConfig(S.ComplexSpectrum, N=200, Ts=0.1, M=4, observable=Observable.X1),
    }


def trial_seed(base_seed: int, variance_index: int, trial_index: int) -> int:
    """Stable 64-bit seed: first 8 bytes (little-endian) of BLAKE2b over three uint64 LE."""
    payload = struct.pack("<QQQ", base_seed & (2**64 - 1), variance_index, trial_index)
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def _checksum(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


def _run_method(method, data, truth, config: ExperimentConfig):
    """Return (E1, E2, iterations, selected continuous eigenvalues)."""
    n_true = len(config.system.true_eigenvalues)
    if method == "kbk":
        model, post, trace = kbk.em_fit(data, config.em)
        A, estimate, iterations = model.A, flatten_blocks(post.means), trace.n_iterations
    else:
        A = baselines.METHODS[method](baselines.SnapshotPairs.from_blocks(data))
        estimate = baselines.reconstruct(A, data.blocks[0], data.Q).ravel()
        iterations = 0
    spec = spectrum.analyze(A, config.M, config.Ts, n_true)
    e1 = spectrum.eig_error(spec.continuous_eigs, config.system.true_eigenvalues)
    e2 = spectrum.state_rmse(estimate, truth)
    if not (math.isfinite(e1) and math.isfinite(e2)):
        raise KoopmanError("non-finite error metric")
    return e1, e2, iterations, spec.continuous_eigs


def run_trial(config: ExperimentConfig, traj: sim.Trajectory, vi: int, ti: int) -> list:
    var = config.noise_variances[vi]
    seed = trial_seed(config.seed, vi, ti)
    noisy = sim.add_noise(traj, sim.NoiseSpec(var, seed))
    series = observable_series(noisy.states, config.observable)
    series.setflags(write=False)
    data = build_blocks(series, config.M, config.Ts)
    truth = observable_series(traj.states, config.observable)[: data.Q * config.M]
    digest = _checksum(series)
    records = []
    for method in sorted(config.methods):
        t0 = time.perf_counter()
        rec = TrialRecord(config.system.value, method, var, ti, math.nan, math.nan, 0, 0.0, seed)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", baselines.BranchCutWarning)
                rec.E1, rec.E2, rec.iterations, rec.eigenvalues = _run_method(method, data, truth, config)
        except (KoopmanError, np.linalg.LinAlgError, ValueError) as exc:
            rec.failed = True
            rec.error = f"{type(exc).__name__}: {exc}"
            log.info("trial %d var %g %s failed: %s", ti, var, method, rec.error)
        rec.runtime_ms = 1e3 * (time.perf_counter() - t0)
        rec.input_checksum = _checksum(data.blocks)
        records.append(rec)
    if _checksum(series) != digest or any(r.input_checksum != records[0].input_checksum for r in records):
        raise RuntimeError("methods did not see identical input data")
    return records


def run_experiment(config: ExperimentConfig) -> list:
    config.validate()
    traj = sim.integrate(config.system, config.x0, config.Ts, config.N, SUBSTEPS)
    records = []
    for vi in range(len(config.noise_variances)):
        for ti in range(config.trials):
            records.extend(run_trial(config, traj, vi, ti))
    order = {v: i for i, v in enumerate(config.noise_variances)}
    records.sort(key=lambda r: (order[r.noise_variance], r.trial_index, r.method))
    return records


def summarize(records: list) -> list:
    """Mean and population std of E1/E2 per (system, method, variance) over successful trials."""
    if not records:
        raise ValueError("no records to summarize")
    groups = {}
    for r in records:
        groups.setdefault((r.system, r.method, r.noise_variance), []).append(r)
    rows = []
    for (system, method, var), recs in groups.items():
        ok = [r for r in recs if not r.failed]
        e1 = np.array([r.E1 for r in ok])
        e2 = np.array([r.E2 for r in ok])
        rows.append(
            {
                "system": system,
                "method": method,
                "noise_var": var,
                "n": len(ok),
                "failures": len(recs) - len(ok),
                "E1_mean": float(e1.mean()) if ok else math.nan,
                "E1_std": float(e1.std()) if ok else math.nan,
                "E2_mean": float(e2.mean()) if ok else math.nan,
                "E2_std": float(e2.std()) if ok else math.nan,
            }
        )
    return rows


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def write_outputs(config: ExperimentConfig, records: list, out_dir: Path, record_timing=False):
    """Write results.csv, eigs.csv, summary.csv and metadata.json.

    ``runtime_ms`` is left blank unless ``record_timing`` so that reruns are
    byte-identical.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in records:
            w.writerow(
                [
                    r.system,
                    r.method,
                    _fmt(r.noise_variance),
                    r.trial_index,
                    _fmt(r.E1),
                    _fmt(r.E2),
                    r.iterations,
                    _fmt(r.runtime_ms) if record_timing else "",
                    int(r.failed),
                ]
            )
    with open(out_dir / "eigs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EIGS_HEADER)
        for r in records:
            for i, z in enumerate(r.eigenvalues):
                w.writerow([r.system, r.method, _fmt(r.noise_variance), r.trial_index, i, _fmt(z.real), _fmt(z.imag)])
    summary = summarize(records)
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(summary[0]), lineterminator="\n")
        w.writeheader()
        for row in summary:
            w.writerow({k: _fmt(v) for k, v in row.items()})
    meta = {
        "tool": "noisykoop",
        "version": __version__,
        "kernel_backend": BACKEND_NAME,
        "rng_algorithm": sim.RNG_ALGORITHM,
        "seed_derivation": "blake2b(digest_size=8) over struct '<QQQ'(base_seed, variance_index, trial_index), little-endian",
        "integrator": f"classical RK4, {SUBSTEPS} substeps per sample",
        "e2_convention": E2_CONVENTIONS,
        "eig_pairing": "minimum-cost permutation",
        "config": config.to_dict(),
        "failures": [
            {"method": r.method, "noise_var": r.noise_variance, "trial": r.trial_index, "seed": r.seed_used, "error": r.error}
            for r in records
            if r.failed
        ],
    }
    (out_dir / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return summary


__all__ = [
    "ExperimentConfig",
    "TrialRecord",
    "default_configs",
    "run_experiment",
    "run_trial",
    "summarize",
    "trial_seed",
    "write_outputs",
]
