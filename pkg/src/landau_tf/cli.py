"""Command-line entry point: ``landau-tf <subcommand> [flags]``.

Every output file gets a ``<name>.run.json`` sidecar (RunRecord) with the
config snapshot, tool version, wall time, diagnostics and captured warnings.
Data files are byte-identical across reruns of the same config; only the
sidecar's wall time varies.

Exit codes: 0 success, 1 solver failure, 2 usage error, 3 validation failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import filecmp
import io
import json
import logging
import os
import sys
import tempfile
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("landau_tf")

CACHE_ENV = "LANDAU_TF_CACHE"
EXIT_OK, EXIT_SOLVER, EXIT_USAGE, EXIT_VALIDATION = 0, 1, 2, 3
SUBCOMMANDS = ("kernels", "spectrum", "stf", "dstf", "trace-sweep", "validate")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    Z: float | None = None
    B: float | None = None
    N: float | None = None
    neutral: bool = False
    critical: bool = False
    one_d: bool = False
    beta: float = 1.5
    Z_list: tuple = (8.0, 16.0, 32.0, 64.0)
    m: int = 0
    m_max: int | None = None
    z_max: float | None = None
    n: int | None = None
    h: float | None = None
    n_radial: int = 2000
    tol: float = 1e-9
    mixing: float = 0.5
    order: int = 64
    potential: str = "harmonic"
    potential_file: str | None = None
    V0: float = 10.0
    a: float = 1.0
    cutoff: float = 0.0
    max_count: int | None = None
    out: str = "."
    cache_dir: str | None = None
    kernel_table: str | None = None
    quick: bool = False
    seed: int = 0

    def snapshot(self) -> dict:
        d = dataclasses.asdict(self)
        d["Z_list"] = list(d["Z_list"])
        return d


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_list(s) -> tuple:
    if isinstance(s, (tuple, list)):
        return tuple(float(x) for x in s)
    return tuple(float(x) for x in str(s).replace(" ", "").split(",") if x)


def _optional(conv):
    return lambda s: None if str(s).strip().lower() in ("", "none") else conv(s)


_CONVERTERS = {
    "Z": _optional(float), "B": _optional(float), "N": _optional(float),
    "neutral": _parse_bool, "critical": _parse_bool, "one_d": _parse_bool, "quick": _parse_bool,
    "beta": float, "Z_list": _parse_list, "m": int, "m_max": _optional(int), "z_max": _optional(float),
    "n": _optional(int), "h": _optional(float), "n_radial": int, "tol": float, "mixing": float, "order": int,
    "potential": str, "potential_file": _optional(str), "V0": float, "a": float, "cutoff": float, "max_count": _optional(int), "out": str,
    "cache_dir": _optional(str), "kernel_table": _optional(str), "seed": int,
}


def read_config_file(path) -> dict:
    """key = value lines; '#' starts a comment; keys use the flag names (dashes or underscores)."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, val = (x.strip() for x in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONVERTERS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _CONVERTERS[key](val)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    p = _Parser(prog="landau-tf", description="Magnetic Thomas-Fermi laboratory (lowest Landau band).")
    p.add_argument("--version", action="version", version=f"landau-tf {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; flags override its values")
    common.add_argument("--out", default=S, help="output directory (default .)")
    common.add_argument("--cache-dir", dest="cache_dir", default=S,
                        help=f"kernel cache directory (default ${CACHE_ENV} or ~/.cache/landau_tf)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="subcommand", parser_class=_Parser)
    sub.required = True

    def grid_flags(sp):
        sp.add_argument("--z-max", dest="z_max", type=float, default=S)
        sp.add_argument("--n", type=int, default=S, help="odd node count")
        sp.add_argument("--h", type=float, default=S, help="grid spacing (instead of --n)")

    k = sub.add_parser("kernels", parents=[common], help="tabulate V_m and V_mn")
    k.add_argument("--B", type=float, default=S)
    k.add_argument("--m-max", dest="m_max", type=int, default=S)
    k.add_argument("--order", type=int, default=S)
    grid_flags(k)

    s = sub.add_parser("spectrum", parents=[common], help="negative spectrum of -d^2/dz^2 - W")
    s.add_argument("--potential", choices=("harmonic", "square-well", "coulomb"), default=S)
    s.add_argument("--potential-file", dest="potential_file", default=S,
                   help="CSV with columns z,W on a symmetric uniform grid with an odd node count")
    s.add_argument("--V0", type=float, default=S)
    s.add_argument("--a", type=float, default=S)
    s.add_argument("--Z", type=float, default=S)
    s.add_argument("--B", type=float, default=S)
    s.add_argument("--m", type=int, default=S)
    s.add_argument("--cutoff", type=float, default=S)
    s.add_argument("--max-count", dest="max_count", type=int, default=S)
    grid_flags(s)

    t = sub.add_parser("stf", parents=[common], help="solve the STF equation")
    t.add_argument("--Z", type=float, default=S)
    t.add_argument("--B", type=float, default=S)
    t.add_argument("--N", type=float, default=S)
    t.add_argument("--neutral", action="store_true", default=S)
    t.add_argument("--n-radial", dest="n_radial", type=int, default=S)
    t.add_argument("--tol", type=float, default=S)
    t.add_argument("--mixing", type=float, default=S)

    d = sub.add_parser("dstf", parents=[common], help="solve the channel (DSTF) or 1D theory")
    d.add_argument("--Z", type=float, default=S)
    d.add_argument("--B", type=float, default=S)
    d.add_argument("--N", type=float, default=S)
    d.add_argument("--critical", action="store_true", default=S, help="mu = 0: report N_c")
    d.add_argument("--one-d", dest="one_d", action="store_true", default=S, help="m = 0 theory")
    d.add_argument("--m-max", dest="m_max", type=int, default=S, help="fixed channel count (default adaptive)")
    d.add_argument("--kernel-table", dest="kernel_table", default=S, help="reuse a saved kernel table (.npz)")
    d.add_argument("--tol", type=float, default=S)
    d.add_argument("--mixing", type=float, default=S)
    grid_flags(d)

    w = sub.add_parser("trace-sweep", parents=[common], help="quantum vs semiclassical trace along B = Z^beta")
    w.add_argument("--Z-list", dest="Z_list", type=_parse_list, default=S)
    w.add_argument("--beta", type=float, default=S)

    v = sub.add_parser("validate", parents=[common], help="run the acceptance checks")
    v.add_argument("--quick", action="store_true", default=S,
                   help="skip the repeated criterion recomputation in the determinism check")
    v.add_argument("--seed", type=int, default=S)
    return p


def parse_config(argv, env=None) -> tuple[RunConfig, bool]:
    """Flags override file values; unknown file keys and conflicting flags are usage errors."""
    env = os.environ if env is None else env
    ns = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(ns).items() if k not in ("config", "verbose", "subcommand")}
    values = read_config_file(ns.config) if ns.config else {}
    values.update(flags)
    if values.get("cache_dir") is None:
        values["cache_dir"] = env.get(CACHE_ENV) or str(Path.home() / ".cache" / "landau_tf")
    cfg = RunConfig(ns.subcommand, **values)
    _check_config(cfg)
    return cfg, ns.verbose


def _check_config(cfg: RunConfig):
    if cfg.neutral and cfg.N is not None:
        raise UsageError("--N and --neutral are mutually exclusive")
    if cfg.critical and cfg.N is not None:
        raise UsageError("--N and --critical are mutually exclusive")
    needs = {"stf": ("Z", "B"), "dstf": ("Z", "B"), "kernels": ("B",)}
    for name in needs.get(cfg.subcommand, ()):
        if getattr(cfg, name) is None:
            raise UsageError(f"{cfg.subcommand} needs --{name}")
    for name in ("Z", "B", "N", "z_max", "h", "a", "V0"):
        val = getattr(cfg, name)
        if val is not None and not val > 0:
            raise UsageError(f"{name} must be positive, got {val}")
    if not 0 < cfg.tol < 1:
        raise UsageError(f"tol must lie in (0, 1), got {cfg.tol}")
    if not 0 < cfg.mixing <= 1:
        raise UsageError(f"mixing must lie in (0, 1], got {cfg.mixing}")
    if cfg.subcommand == "stf" and cfg.N is not None and cfg.N > cfg.Z:
        raise UsageError(f"STF binds at most Z electrons: N={cfg.N} > Z={cfg.Z}")
    if cfg.subcommand == "stf" and cfg.N is None and not cfg.neutral:
        cfg.neutral = True
    if cfg.subcommand == "dstf" and cfg.N is None and not cfg.critical:
        raise UsageError("dstf needs --N or --critical")
    if cfg.subcommand == "trace-sweep" and len(cfg.Z_list) < 4:
        raise UsageError("trace-sweep needs at least 4 Z values")


# output

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items() if not str(k).startswith("_")}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, float) and not np.isfinite(x):
        return repr(x)
    return x


class Writer:
    """Single sink for all files of a run; each file gets a RunRecord sidecar."""

    def __init__(self, out_dir, cfg: RunConfig):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.files: list[Path] = []

    def csv(self, name: str, header, rows):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])
        self._write(name, buf.getvalue())

    def json(self, name: str, payload: dict):
        self._write(name, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")

    def _write(self, name, text):
        path = self.dir / name
        path.write_text(text)
        self.files.append(path)

    def finish(self, wall_time: float, diagnostics: dict, caught: list[str]):
        for path in self.files:
            record = dict(output=path.name, config=self.cfg.snapshot(), tool="landau-tf",
                          version=__version__, wall_time_s=round(wall_time, 3),
                          diagnostics=diagnostics, warnings=caught)
            (path.parent / (path.name + ".run.json")).write_text(
                json.dumps(_jsonable(record), indent=2, sort_keys=True) + "\n")


# subcommands

def _uniform_grid(cfg: RunConfig, z_max_default: float, n_default: int):
    from .grids import UniformGrid

    z_max = cfg.z_max or z_max_default
    if cfg.h is not None:
        return UniformGrid.from_spacing(z_max, cfg.h)
    n = cfg.n or n_default
    if n % 2 == 0:
        raise UsageError("--n must be odd")
    return UniformGrid(z_max, n)


def run_kernels(cfg: RunConfig, out: Writer) -> dict:
    from .kernels import build_kernel_table

    m_max = 10 if cfg.m_max is None else cfg.m_max
    grid = _uniform_grid(cfg, 20.0 / np.sqrt(cfg.B), 801)
    K = build_kernel_table(cfg.B, m_max, grid, quadrature_order=cfg.order, cache_dir=cfg.cache_dir)
    z = grid.z
    out.csv("kernels.csv", ["m", "z", "V_m"],
            ((m, float(z[j]), float(K.v_single[m, j])) for m in range(m_max + 1) for j in range(grid.n)))
    summary = dict(B=K.B, m_max=K.m_max, z_max=grid.z_max, n=grid.n, cache_key=K.cache_key(),
                   quadrature_order=K.quadrature_order, achieved_tol=K.achieved_tol,
                   v00_at_0=float(K.v_pair[0, 0, grid.n - 1]), v0_at_0=float(K.v_single[0, grid.center]))
    out.json("kernels.json", summary)
    return dict(quadrature_order=K.quadrature_order, achieved_tol=K.achieved_tol)


def _read_potential(path):
    from .grids import UniformGrid

    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read potential file {path}: {exc}") from exc
    z, W = data[:, 0], data[:, 1]
    grid = UniformGrid(float(z[-1]), z.size) if z.size % 2 == 1 and z.size >= 3 else None
    if grid is None or not np.allclose(z, grid.z, rtol=0, atol=1e-9 * grid.z_max):
        raise UsageError("potential file must sample a symmetric uniform grid with an odd node count")
    return W, grid


def run_spectrum(cfg: RunConfig, out: Writer) -> dict:
    from .kernels import v_single
    from .spectral1d import negative_spectrum
    from .validate import square_well_potential

    cutoff, max_count = cfg.cutoff, cfg.max_count
    if cfg.potential_file:
        W, grid = _read_potential(cfg.potential_file)
        pid = f"file {Path(cfg.potential_file).name}"
    elif cfg.potential == "harmonic":
        W = lambda z: -z * z
        grid = _uniform_grid(cfg, 10.0, 2001)
        if max_count is None:
            max_count = 5
        cutoff = np.inf
        pid = "harmonic"
    elif cfg.potential == "square-well":
        W = square_well_potential(cfg.V0, cfg.a)
        grid = _uniform_grid(cfg, 200.0 * cfg.a, 40001)
        pid = f"square-well V0={cfg.V0!r} a={cfg.a!r}"
    else:
        if cfg.Z is None or cfg.B is None:
            raise UsageError("coulomb potential needs --Z and --B")
        Z, B, m = cfg.Z, cfg.B, cfg.m
        W = lambda z: Z * v_single(m, B, z)
        grid = _uniform_grid(cfg, 50.0 / np.sqrt(B), 4001)
        pid = f"coulomb Z={Z!r} B={B!r} m={m}"
    res = negative_spectrum(W, grid, cutoff=cutoff, max_count=max_count, potential_id=pid)
    out.csv("spectrum.csv", ["index", "eigenvalue"], ((i, float(v)) for i, v in enumerate(res.eigenvalues)))
    out.json("spectrum.json", dict(potential=pid, cutoff=cutoff, count=len(res), extrapolated=res.extrapolated,
                                   eigenvalues=res.eigenvalues, max_correction=res.max_correction,
                                   z_max=grid.z_max, n=grid.n))
    return dict(max_correction=res.max_correction)


def run_stf(cfg: RunConfig, out: Writer) -> dict:
    from .stf import default_radial_grid, support_radius_bound, solve_stf, support_radius

    grid = default_radial_grid(cfg.Z, cfg.B, n=cfg.n_radial)
    N = None if cfg.neutral else cfg.N
    rho, energy = solve_stf(cfg.Z, cfg.B, N, grid=grid, mixing=cfg.mixing, tol=cfg.tol)
    info = support_radius(rho)
    phi = rho.phi()
    out.csv("stf.csv", ["r", "rho", "phi"],
            ((float(r), float(d), float(p)) for r, d, p in zip(rho.r, rho.rho, phi)))
    out.json("stf.json", dict(Z=cfg.Z, B=cfg.B, N=rho.N, nu=rho.nu, energy=energy.to_dict(),
                              scaled_energy=energy.total / (cfg.Z ** 1.8 * cfg.B ** 0.4),
                              r_S=info.r_S, r_S_bound=support_radius_bound(cfg.Z, cfg.B),
                              edge_exponent=info.edge_exponent, tf_residual=rho.diagnostics["tf_residual"]))
    return dict(iterations_mixing=rho.diagnostics["iterations_mixing"],
                iterations_newton=rho.diagnostics["iterations_newton"],
                tf_residual=rho.diagnostics["tf_residual"])


def run_dstf(cfg: RunConfig, out: Writer) -> dict:
    from . import dstf
    from .kernels import KernelTable, build_kernel_table

    Z, B = cfg.Z, cfg.B
    N = None if cfg.critical else cfg.N
    if cfg.one_d:
        default = dstf.default_1d_grid(Z, B)
    else:
        default = dstf.default_dstf_grid(Z, B)
    if cfg.z_max or cfg.n or cfg.h:
        grid = _uniform_grid(cfg, default.z_max, default.n)
    else:
        grid = default
    kw = dict(tol=min(cfg.tol, 1e-8), mixing=cfg.mixing)
    if cfg.kernel_table:
        K = KernelTable.load(cfg.kernel_table)
        grid = K.grid
    else:
        K = None
    if cfg.one_d:
        K = K or build_kernel_table(B, 0, grid, cache_dir=cfg.cache_dir)
        res = dstf.solve_1dstf(Z, B, K, N, **kw)
    elif cfg.m_max is not None or K is not None:
        K = K or build_kernel_table(B, cfg.m_max, grid, cache_dir=cfg.cache_dir)
        res = dstf.solve_dstf(Z, B, N, K, critical=cfg.critical, **kw)
    else:
        res, K = dstf.solve_dstf_adaptive(Z, B, N, grid=grid, critical=cfg.critical,
                                          cache_dir=cfg.cache_dir, **kw)
    dens = res.density
    z = dens.grid.z
    out.csv("dstf.csv", ["m", "z", "rho_m"],
            ((m, float(z[j]), float(dens.rho[m, j])) for m in range(dens.m_max + 1) for j in range(z.size)))
    payload = dict(Z=Z, B=B, N=dens.total_mass(), mu=dens.mu, energy=res.energy.to_dict(),
                   saturated=res.saturated, m_max=dens.m_max, channel_masses=dens.channel_masses(),
                   tf_residual=dens.diagnostics["tf_residual"], one_d=cfg.one_d, critical=cfg.critical,
                   z_max=dens.grid.z_max, n=dens.grid.n, kernel_cache_key=K.cache_key())
    if cfg.critical:
        payload["N_c"] = dens.total_mass()
        payload["N_c_over_Z"] = dens.total_mass() / Z
    if cfg.one_d:
        payload["energy_bounds"] = dstf.energy_bounds_1d(Z, B)
    out.json("dstf.json", payload)
    return dict(iterations=dens.diagnostics["iterations"], tf_residual=dens.diagnostics["tf_residual"])


def run_trace_sweep(cfg: RunConfig, out: Writer) -> dict:
    from .trace import error_scaling_sweep

    sweep = error_scaling_sweep(list(cfg.Z_list), cfg.beta)
    cols = ["Z", "B", "quantum_trace", "semiclassical_trace", "difference", "channels_used"]
    out.csv("trace_sweep.csv", cols, ([r[c] for c in cols] for r in sweep.rows))
    out.json("trace_sweep.json", sweep.to_dict())
    return dict(slope=sweep.slope, r_squared=sweep.r_squared)


def determinism_check(argv=("stf", "--Z", "2", "--B", "5", "--n-radial", "800")) -> tuple[bool, str]:
    """Run one CLI command twice into fresh directories and compare the data files byte for byte."""
    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
        for d in (a, b):
            code = main(list(argv) + ["--out", d, "--cache-dir", os.path.join(d, "cache")])
            if code != EXIT_OK:
                return False, f"run exited with {code}"
        names = sorted(p.name for p in Path(a).iterdir()
                       if p.is_file() and not p.name.endswith(".run.json"))
        same = all(filecmp.cmp(Path(a) / n, Path(b) / n, shallow=False) for n in names)
        return same and bool(names), f"{len(names)} data files {'identical' if same else 'DIFFER'}"


def run_validate(cfg: RunConfig, out: Writer) -> dict:
    from .validate import run_all

    checks = run_all(quick=cfg.quick)
    for chk in checks:
        print(chk.line())
    out.json("validate.json", dict(quick=cfg.quick, passed=all(c.passed for c in checks),
                                   checks=[dict(criterion=c.criterion, name=c.name, passed=c.passed,
                                                detail=c.detail, values=c.values) for c in checks]))
    return dict(passed=all(c.passed for c in checks))


RUNNERS = {"kernels": run_kernels, "spectrum": run_spectrum, "stf": run_stf, "dstf": run_dstf,
           "trace-sweep": run_trace_sweep, "validate": run_validate}


def _solver_errors():
    from .dstf import ChannelMismatchError, ChannelTruncationError
    from .kernels import QuadratureError
    from .spectral1d import GridTooSmallError, SpectrumError
    from .stf import ConvergenceError, GridExtensionError
    from .trace import InsufficientPointsError

    return (ConvergenceError, GridExtensionError, QuadratureError, ChannelTruncationError, ChannelMismatchError,
            GridTooSmallError, SpectrumError, InsufficientPointsError, FloatingPointError, np.linalg.LinAlgError)


class _Collect(logging.Handler):
    def __init__(self):
        super().__init__(logging.WARNING)
        self.messages: list[str] = []

    def emit(self, record):
        self.messages.append(f"{record.name}: {record.getMessage()}")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg, verbose = parse_config(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if verbose and not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    collector = _Collect()
    log.addHandler(collector)
    writer = Writer(cfg.out, cfg)
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            diagnostics = RUNNERS[cfg.subcommand](cfg, writer)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _solver_errors() as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    finally:
        log.removeHandler(collector)
    messages = collector.messages + [f"{w.category.__name__}: {w.message}" for w in caught]
    writer.finish(time.perf_counter() - t0, diagnostics, messages)
    if cfg.subcommand == "validate" and not diagnostics.get("passed", False):
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
