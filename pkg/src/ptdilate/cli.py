"""Command-line orchestration of the dilation / simulation / fitting pipeline.

Subcommands: ``dilate``, ``simulate``, ``sweep``, ``pulses``, ``fit``,
``verify``.  Configuration is a single JSON document (``--config``) with
individual flags overriding file values; every output file embeds a
``# {json}`` metadata header (config hash, seed, package version) that
suffices to re-run the job.  Floats are emitted in shortest round-trip
decimal form and files are written atomically, so identical config +
seed gives byte-identical outputs.

Exit codes: 0 success, 1 validation error, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .dilation import (
    DilationConfig,
    PositivityLost,
    SingularPropagator,
    dilate,
    verify_dilation,
)
from .fitkit import eigen_curve, fit_r, fit_table_to_csv
from .numkit import NotHermitian, NotPositive, SingularPair, TimeGrid
from .pauli import extract_a_series
from .pulse import (
    GridTooCoarse,
    NVParams,
    rotating_frame_check,
    simulate_lab_frame,
    subspace_h0,
    synthesize,
)
from .ptmodel import analytic_p0, pt_hamiltonian
from .readout import (
    PLRates,
    RankDeficient,
    SingularReadout,
    ZeroSelectionBranch,
    noisy_p0_curve,
)
from .simulator import ZeroBranch, branch_populations, prepare_initial, simulate_pt

__all__ = ["RunConfig", "ValidationError", "main"]

OUTDIR_ENV = "PTDILATE_OUTDIR"

_NUMERIC_ERRORS = (
    SingularPropagator,
    PositivityLost,
    NotHermitian,
    NotPositive,
    SingularPair,
    SingularReadout,
    RankDeficient,
    ZeroBranch,
    ZeroSelectionBranch,
    GridTooCoarse,
    np.linalg.LinAlgError,
)


class ValidationError(ValueError):
    """Aggregated configuration problems; message lists every issue."""


@dataclass
class RunConfig:
    """All knobs of a pipeline run; see field comments for units."""

    r_list: list[float] = field(default_factory=lambda: [0.6])
    t0: float = 0.0
    t1: float = 8.0
    n_nodes: int = 8001
    margin: float = 0.1
    substeps: int = 1
    seed: int = 0
    repetitions: int = 0  # 0 = noise-free expectations
    p_e: float = 0.9
    pl_rates: list[float] = field(
        default_factory=lambda: [0.040, 0.030, 0.028, 0.034]
    )
    nv: dict = field(default_factory=dict)  # NVParams field overrides
    outdir: str = "."
    workers: int = 0  # 0 = processor count
    audit_times: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0])

    def validate(self) -> None:
        problems = []
        if not self.r_list:
            problems.append("r_list must not be empty")
        elif any(r < 0 for r in self.r_list):
            problems.append(f"r values must be >= 0, got {self.r_list}")
        if not self.t1 > self.t0:
            problems.append(f"need t1 > t0, got ({self.t0}, {self.t1})")
        if self.n_nodes < 2:
            problems.append(f"n_nodes must be >= 2, got {self.n_nodes}")
        if not self.margin > 0:
            problems.append(f"margin must be > 0, got {self.margin}")
        if self.substeps < 1:
            problems.append(f"substeps must be >= 1, got {self.substeps}")
        if self.repetitions < 0:
            problems.append(f"repetitions must be >= 0, got {self.repetitions}")
        if not 0.0 < self.p_e <= 1.0:
            problems.append(f"p_e must be in (0, 1], got {self.p_e}")
        if len(self.pl_rates) != 4 or any(v < 0 for v in self.pl_rates):
            problems.append(f"pl_rates must be 4 values >= 0, got {self.pl_rates}")
        if self.workers < 0:
            problems.append(f"workers must be >= 0, got {self.workers}")
        unknown_nv = set(self.nv) - set(NVParams.__dataclass_fields__)
        if unknown_nv:
            problems.append(f"unknown NV parameter fields: {sorted(unknown_nv)}")
        if problems:
            raise ValidationError("; ".join(problems))

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.t0, self.t1, self.n_nodes)

    @property
    def rates(self) -> PLRates:
        return PLRates(rates=tuple(self.pl_rates))

    @property
    def nv_params(self) -> NVParams:
        return NVParams(**self.nv)


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ValidationError("config file must hold a JSON object")
        unknown = set(loaded) - set(RunConfig.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        data.update(loaded)
    overrides = {
        "r_list": args.r,
        "t0": getattr(args, "t0", None),
        "t1": getattr(args, "t1", None),
        "n_nodes": getattr(args, "n_nodes", None),
        "margin": getattr(args, "margin", None),
        "substeps": getattr(args, "substeps", None),
        "seed": getattr(args, "seed", None),
        "repetitions": getattr(args, "repetitions", None),
        "p_e": getattr(args, "p_e", None),
        "outdir": getattr(args, "outdir", None),
        "workers": getattr(args, "workers", None),
    }
    for key, val in overrides.items():
        if val is not None:
            data[key] = val
    env_outdir = os.environ.get(OUTDIR_ENV)
    if env_outdir and getattr(args, "outdir", None) is None:
        data["outdir"] = env_outdir
    cfg = RunConfig(**data)
    cfg.validate()
    return cfg


def _metadata(cfg: RunConfig, **extra) -> dict:
    blob = json.dumps(asdict(cfg), sort_keys=True)
    meta = {
        "config": asdict(cfg),
        "config_sha256": hashlib.sha256(blob.encode()).hexdigest(),
        "seed": cfg.seed,
        "version": __version__,
    }
    meta.update(extra)
    return meta


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v: float) -> str:
    return repr(float(v))


def _rtag(r: float) -> str:
    return format(r, "g").replace(".", "p").replace("-", "m")


def _header(meta: dict) -> str:
    return "# " + json.dumps(meta, sort_keys=True) + "\n"


def cmd_dilate(cfg: RunConfig) -> int:
    for r in cfg.r_list:
        result = dilate(pt_hamiltonian(r), DilationConfig(cfg.grid, cfg.margin, cfg.substeps))
        report = verify_dilation(result, pt_hamiltonian(r))
        aser = extract_a_series(result.hsa_series)
        lines = [_header(_metadata(cfg, r=r, m0=result.m0))]
        lines.append("t,A1,A2,A3,A4,B1,B2,B3,B4\n")
        for t, arow, brow in zip(cfg.grid.times(), aser.a, aser.b):
            lines.append(",".join(_fmt(v) for v in (t, *arow, *brow)) + "\n")
        _atomic_write(
            os.path.join(cfg.outdir, f"aseries_r{_rtag(r)}.csv"), "".join(lines)
        )
        diag = _metadata(
            cfg,
            r=r,
            m0=result.m0,
            mu_prime=result.mu_prime,
            diagnostics=asdict(report),
        )
        _atomic_write(
            os.path.join(cfg.outdir, f"dilation_r{_rtag(r)}.json"),
            json.dumps(diag, sort_keys=True, indent=2) + "\n",
        )
        print(
            f"r={r:g} m0={result.m0:.6g} hermiticity={report.hermiticity:.3e} "
            f"block={report.block_antisym:.3e} min_eig={report.min_eig_m_minus_i:.4f}"
        )
    return 0


def cmd_simulate(cfg: RunConfig) -> int:
    for r in cfg.r_list:
        traj, _ = simulate_pt(r, cfg.grid, margin=cfg.margin, substeps=cfg.substeps)
        ts = cfg.grid.times()
        oracle = analytic_p0(r, ts)
        err = np.abs(traj.p0 - oracle)
        max_err = float(np.max(err))
        lines = [_header(_metadata(cfg, r=r, max_error=max_err))]
        lines.append("t,p0_sim,p0_oracle,abs_error,success_prob\n")
        for row in zip(ts, traj.p0, oracle, err, traj.success_prob):
            lines.append(",".join(_fmt(v) for v in row) + "\n")
        _atomic_write(
            os.path.join(cfg.outdir, f"trajectory_r{_rtag(r)}.csv"), "".join(lines)
        )
        print(f"r={r:g} max_error={max_err:.6e}")
    return 0


def _sweep_worker(packed) -> np.ndarray:
    r, t0, t1, n_nodes, margin, substeps = packed
    traj, _ = simulate_pt(
        r, TimeGrid(t0, t1, n_nodes), margin=margin, substeps=substeps
    )
    return traj.p0


def cmd_sweep(cfg: RunConfig) -> int:
    jobs = [
        (r, cfg.t0, cfg.t1, cfg.n_nodes, cfg.margin, cfg.substeps)
        for r in cfg.r_list
    ]
    workers = cfg.workers or os.cpu_count() or 1
    workers = min(workers, len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_worker, jobs))
    else:
        rows = [_sweep_worker(j) for j in jobs]
    ts = cfg.grid.times()

    def matrix_text(meta: dict, mat: list[np.ndarray]) -> str:
        lines = [_header(meta)]
        lines.append("r," + ",".join(_fmt(t) for t in ts) + "\n")
        for r, row in zip(cfg.r_list, mat):
            lines.append(_fmt(r) + "," + ",".join(_fmt(v) for v in row) + "\n")
        return "".join(lines)

    _atomic_write(
        os.path.join(cfg.outdir, "sweep_p0.csv"),
        matrix_text(_metadata(cfg, kind="noise-free"), rows),
    )
    if cfg.repetitions > 0:
        noisy = []
        for idx, r in enumerate(cfg.r_list):
            traj, _ = simulate_pt(
                r, cfg.grid, margin=cfg.margin, substeps=cfg.substeps
            )
            pops = branch_populations(traj.states)
            rng = np.random.default_rng([cfg.seed, idx])
            noisy.append(
                noisy_p0_curve(pops, cfg.rates, cfg.repetitions, seed=rng)
            )
        _atomic_write(
            os.path.join(cfg.outdir, "sweep_p0_noisy.csv"),
            matrix_text(
                _metadata(
                    cfg,
                    kind="poisson",
                    noise="numpy-default_rng-poisson",
                    repetitions=cfg.repetitions,
                ),
                noisy,
            ),
        )
    print(f"sweep: {len(cfg.r_list)} r values x {cfg.n_nodes} nodes")
    return 0


def cmd_pulses(cfg: RunConfig, lab_audit: bool = False) -> int:
    nv = cfg.nv_params
    _, carriers = subspace_h0(nv)
    for r in cfg.r_list:
        result = dilate(pt_hamiltonian(r), DilationConfig(cfg.grid, cfg.margin, cfg.substeps))
        aser = extract_a_series(result.hsa_series)
        prog = synthesize(aser, carriers)
        resid = rotating_frame_check(prog, aser)
        meta = _metadata(
            cfg,
            r=r,
            roundtrip_residual=resid,
            carriers=list(carriers),
        )
        if lab_audit:
            meta["lab_audit"] = _lab_audit(cfg, r, result, aser, prog, nv)
        lines = [_header(meta)]
        lines.append("t,omega_rabi,phase,freq1_offset,freq2_offset\n")
        w1, w2 = prog.carriers
        for row in zip(
            cfg.grid.times(), prog.omega_rabi, prog.phase, prog.freq1 - w1, prog.freq2 - w2
        ):
            lines.append(",".join(_fmt(v) for v in row) + "\n")
        _atomic_write(
            os.path.join(cfg.outdir, f"pulses_r{_rtag(r)}.csv"), "".join(lines)
        )
        print(f"r={r:g} roundtrip_residual={resid:.3e}")
    return 0


def _lab_audit(cfg, r, result, aser, prog, nv) -> dict:
    t_max = max(cfg.audit_times)
    if t_max <= cfg.t0:
        raise ValidationError("audit_times must exceed the grid start")
    f_carrier = max(prog.carriers) / (2.0 * math.pi)
    dt = 0.015 / f_carrier
    n_fine = int(math.ceil((t_max - cfg.t0) / dt)) + 1
    fine = TimeGrid(cfg.t0, t_max, n_fine)
    initial = prepare_initial(
        np.array([1.0, 0.0], dtype=complex), math.sqrt(result.m0 - 1.0)
    )
    lab = simulate_lab_frame(prog, aser, nv, fine, initial)
    report = []
    for tq in cfg.audit_times:
        idx = int(round((tq - cfg.t0) / fine.dt))
        rot = float(analytic_p0(r, fine.times()[idx]))
        report.append(
            {
                "t": tq,
                "p0_lab": float(lab.p0[idx]),
                "p0_rot": rot,
                "deviation": abs(float(lab.p0[idx]) - rot),
            }
        )
    return {"points": report, "max_deviation": max(p["deviation"] for p in report)}


def _read_matrix(path: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    if not lines:
        raise ValidationError(f"{path}: empty input")
    header = lines[0].rstrip("\n").split(",")
    if header[0] != "r":
        raise ValidationError(
            f"{path}: expected first column 'r' in the matrix header, got {header[0]!r}"
        )
    try:
        ts = np.array([float(v) for v in header[1:]])
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric time column in header: {exc}")
    body = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    if body.shape[1] != len(ts) + 1:
        raise ValidationError(
            f"{path}: row width {body.shape[1]} does not match header "
            f"({len(ts) + 1} columns)"
        )
    return body[:, 0], ts, body[:, 1:]


def cmd_fit(cfg: RunConfig, input_path: str, max_points: int = 201) -> int:
    r_nominal, ts, mat = _read_matrix(input_path)
    stride = max(1, (len(ts) - 1) // (max_points - 1)) if len(ts) > max_points else 1
    fits = []
    for row in mat:
        samples = np.column_stack([ts[::stride], row[::stride]])
        samples = samples[np.isfinite(samples[:, 1])]  # drop failed noisy reads
        fits.append(fit_r(samples))
    buf = [
        _header(_metadata(cfg, input=os.path.basename(input_path))),
    ]
    tbl = io.StringIO()
    fit_table_to_csv(tbl, r_nominal, fits)
    buf.append(tbl.getvalue())
    _atomic_write(os.path.join(cfg.outdir, "fits.csv"), "".join(buf))

    curve = eigen_curve(r_nominal, fits)
    lines = [_header(_metadata(cfg, input=os.path.basename(input_path)))]
    lines.append("r_nominal,reE_plus,imE_plus,reE_minus,imE_minus\n")
    for row in curve:
        lines.append(",".join(_fmt(v) for v in row) + "\n")
    _atomic_write(os.path.join(cfg.outdir, "eigencurve.csv"), "".join(lines))
    for r, fit in zip(r_nominal, fits):
        print(f"r={r:g} r_exp={fit.r_exp:.6f} stderr={fit.stderr:.2e}")
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    worst_fail = 0
    for r in cfg.r_list:
        h_s = pt_hamiltonian(r)
        result = dilate(h_s, DilationConfig(cfg.grid, cfg.margin, cfg.substeps))
        report = verify_dilation(result, h_s)
        ok = (
            report.hermiticity <= 1e-10
            and report.block_antisym <= 1e-9
            and report.min_eig_m_minus_i >= 0.99 * cfg.margin
        )
        status = "ok" if ok else "FAIL"
        print(
            f"r={r:g} {status} hermiticity={report.hermiticity:.3e} "
            f"block={report.block_antisym:.3e} metric_ode={report.metric_ode:.3e} "
            f"min_eig={report.min_eig_m_minus_i:.4f}"
        )
        if not ok:
            worst_fail = 2
    return worst_fail


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--r", type=float, action="append", help="non-Hermiticity strength (repeatable)")
    p.add_argument("--t0", type=float)
    p.add_argument("--t1", type=float)
    p.add_argument("--n-nodes", dest="n_nodes", type=int)
    p.add_argument("--margin", type=float)
    p.add_argument("--substeps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--p-e", dest="p_e", type=float)
    p.add_argument("--outdir")
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ptdilate",
        description="Hermitian dilation, dilated-evolution simulation, NV pulse "
        "synthesis, readout modeling and strength fitting for PT-symmetric "
        "two-level Hamiltonians",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("dilate", "emit drive-coefficient series and dilation diagnostics"),
        ("simulate", "trajectories with oracle comparison"),
        ("sweep", "P0 matrix over r and t (optionally with shot noise)"),
        ("pulses", "MW pulse programs (optionally with a lab-frame audit)"),
        ("fit", "fit strengths and the eigenvalue curve from a sweep matrix"),
        ("verify", "run the dilation invariant checks"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name == "pulses":
            p.add_argument(
                "--lab-audit",
                action="store_true",
                help="integrate the lab-frame drives and report RWA deviations",
            )
        if name == "fit":
            p.add_argument("--input", required=True, help="sweep matrix CSV")
            p.add_argument(
                "--max-points",
                type=int,
                default=201,
                help="subsample each curve to at most this many samples",
            )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.command == "dilate":
            return cmd_dilate(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "pulses":
            return cmd_pulses(cfg, lab_audit=args.lab_audit)
        if args.command == "fit":
            return cmd_fit(cfg, args.input, max_points=args.max_points)
        if args.command == "verify":
            return cmd_verify(cfg)
        raise ValidationError(f"unknown command {args.command!r}")
    except (ValidationError, ValueError, OSError, TypeError) as exc:
        if isinstance(exc, _NUMERIC_ERRORS):
            print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 2
        print(f"validation error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except _NUMERIC_ERRORS as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
