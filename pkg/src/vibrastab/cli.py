"""Batch front end: ``vibrastab verify | mode | sweep | simulate``.

Configuration is a flat ``key = value`` text file (``#`` starts a comment)
plus ``--key value`` overrides on the command line.  Every CSV written here
starts with a ``# config:`` line echoing the configuration, then a header
row.  Floats are written in their shortest round-trip form, so repeated runs
with the same configuration produce byte-identical files.

Exit codes: 0 success, 1 failed assumption check, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import galerkin, stability
from .excitation import Excitation, load_excitation_csv, verify_assumptions
from .model import ControlParams, StringParams
from .stability import ModeSystem, Stability

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config_text",
    "load_config",
    "cmd_verify",
    "cmd_mode",
    "cmd_sweep",
    "cmd_simulate",
    "sweep_boundary_offsets",
    "main",
]

THREADS_ENV = "VIBRASTAB_THREADS"


class ConfigError(ValueError):
    """Bad configuration or usage; maps to exit code 2."""


@dataclass(frozen=True)
class RunConfig:
    a: float = 1.0
    gamma: float = 1.0
    alpha: float = 0.1
    delta: float = 0.1
    k: float = 100.0
    cutoff_N: int | None = None
    excitation: str = "harmonic"  # "harmonic", "square" or a path to a t,g CSV file
    samples_per_period: int = 4096
    N_sim: int = 8
    tail: int = 32
    periods: int = 100
    steps_per_period: int = 4096
    epsilon: float = 0.0
    seed: int = 0
    burn_in: int = 10
    init: str = "random"  # "random" or "zero"
    n: int = 1
    delta_grid: tuple[float, ...] = ()
    k_grid: tuple[float, ...] = ()
    output_dir: str = "."
    svg: bool = False

    def __post_init__(self):
        if self.init not in ("random", "zero"):
            raise ConfigError(f"init must be 'random' or 'zero', got {self.init!r}")
        for name in ("N_sim", "periods", "n"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.tail < 0 or self.burn_in < 0:
            raise ConfigError("tail and burn_in must be >= 0")
        if self.steps_per_period < 1024 or self.steps_per_period % 4:
            raise ConfigError("steps_per_period must be a multiple of 4, at least 1024")
        if any(not d >= 0 for d in self.delta_grid) or any(not k >= 1 for k in self.k_grid):
            raise ConfigError("delta_grid entries must be >= 0 and k_grid entries >= 1")
        try:
            self.string_params()
            ControlParams(self.delta, self.k, Excitation.harmonic(), self.cutoff_N)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def string_params(self) -> StringParams:
        return StringParams(self.a, self.gamma, self.alpha)

    def build_excitation(self) -> Excitation:
        spp = self.samples_per_period
        try:
            if self.excitation == "harmonic":
                return Excitation.harmonic(samples_per_period=spp)
            if self.excitation == "square":
                return Excitation.square(samples_per_period=spp)
            path = Path(self.excitation)
            if not path.is_file():
                raise ConfigError(f"excitation file not found: {path}")
            return load_excitation_csv(path, samples_per_period=spp)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def control_params(self, excitation: Excitation | None = None, **changes) -> ControlParams:
        e = excitation if excitation is not None else self.build_excitation()
        values = dict(delta=self.delta, k=self.k, cutoff_N=self.cutoff_N) | changes
        return ControlParams(values["delta"], values["k"], e, values["cutoff_N"])

    def echo(self) -> str:
        """One-line ``key=value`` echo; ``output_dir`` is left out so outputs do not depend on where they live."""
        parts = []
        for f in dataclasses.fields(self):
            if f.name != "output_dir":
                parts.append(f"{f.name}={_format_value(getattr(self, f.name))}")
        return "# config: " + " ".join(parts)


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_format_value(x) for x in v)
    if v is None:
        return "none"
    return str(v)


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_optional_int(s: str):
    return None if s.strip().lower() in ("", "none") else int(s)


def _parse_float_list(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.replace(" ", "").split(",") if x)


_PARSERS = {
    "a": float,
    "gamma": float,
    "alpha": float,
    "delta": float,
    "k": float,
    "cutoff_N": _parse_optional_int,
    "excitation": str.strip,
    "samples_per_period": int,
    "N_sim": int,
    "tail": int,
    "periods": int,
    "steps_per_period": int,
    "epsilon": float,
    "seed": int,
    "burn_in": int,
    "init": str.strip,
    "n": int,
    "delta_grid": _parse_float_list,
    "k_grid": _parse_float_list,
    "output_dir": str.strip,
    "svg": _parse_bool,
}


def _convert(key: str, raw: str):
    if key not in _PARSERS:
        raise ConfigError(f"unknown configuration key {key!r}")
    try:
        return _PARSERS[key](raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into converted values."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        out[key] = _convert(key, raw)
    return out


def _parse_overrides(tokens: list[str]) -> dict:
    out = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        if "=" in tok:
            key, raw = tok[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"missing value for {tok}")
            key, raw = tok[2:], tokens[i + 1]
            i += 2
        out[key] = _convert(key, raw)
    return out


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        values.update(parse_config_text(text))
    values.update(overrides or {})
    return RunConfig(**values)


# -- CSV helpers --------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return str(v)


def _write_csv(path: Path, cfg: RunConfig, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(cfg.echo() + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _out(cfg: RunConfig, name: str) -> Path:
    return Path(cfg.output_dir) / name


# -- verify -------------------------------------------------------------------


def cmd_verify(cfg: RunConfig) -> int:
    """Check the zero-mean assumptions on the excitation; exit 0 iff both hold."""
    report = verify_assumptions(cfg.build_excitation())
    rows = [
        ("mean_g", report.mean_g, report.zero_mean_g),
        ("mean_G", report.mean_G, report.zero_mean_G),
        ("gamma", report.gamma, ""),
        ("max_abs_g", report.max_abs_g, ""),
        ("max_abs_G", report.max_abs_G, ""),
        ("tolerance", report.tolerance, ""),
    ]
    _write_csv(_out(cfg, "assumptions.csv"), cfg, ["quantity", "value", "passed"], rows)
    for msg in report.messages():
        print(msg)
    return 0 if report.passed else 1


# -- mode ---------------------------------------------------------------------

_MODE_HEADER = [
    "n", "delta", "k", "alpha", "gamma", "margin", "side", "eigen_kind",
    "lambda1_00", "lambda1_01", "lambda1_10", "lambda1_11",
    "avg_eig1_re", "avg_eig1_im", "avg_eig2_re", "avg_eig2_im",
    "mono_eig1_re", "mono_eig1_im", "mono_eig2_re", "mono_eig2_im",
    "spectral_radius", "verdict",
]  # fmt: skip


def cmd_mode(cfg: RunConfig, n: int | None = None) -> int:
    """Report the averaged matrix, threshold and monodromy verdict of one mode."""
    n = cfg.n if n is None else n
    if n < 1:
        raise ConfigError("mode index n must be >= 1")
    ms = ModeSystem(n, cfg.string_params(), cfg.control_params())
    L1 = stability.lambda1_closed_form(ms).tolist()
    ev = stability.averaged_eigenvalues(L1)
    th = stability.threshold_test(ms, cfg.epsilon)
    v = stability.classify_monodromy(ms, cfg.steps_per_period)
    print(f"mode n={n}")
    print(f"Lambda1 = {L1!r}")
    print(f"averaged eigenvalues: {ev[0]!r}, {ev[1]!r}")
    print(f"threshold margin: {th.margin!r} ({th.side} side, {th.eigen_kind})")
    print(f"monodromy eigenvalues: {v.monodromy_eigs[0]!r}, {v.monodromy_eigs[1]!r}")
    print(f"verdict: {v.stability}")
    row = [
        n, cfg.delta, cfg.k, cfg.alpha, cfg.gamma, th.margin, th.side, th.eigen_kind,
        *L1[0], *L1[1],
        ev[0].real, ev[0].imag, ev[1].real, ev[1].imag,
        v.monodromy_eigs[0].real, v.monodromy_eigs[0].imag,
        v.monodromy_eigs[1].real, v.monodromy_eigs[1].imag,
        v.spectral_radius, v.stability.value,
    ]  # fmt: skip
    path = _out(cfg, "modes.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    fresh = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        fh.write(cfg.echo() + "\n")
        if fresh:
            w.writerow(_MODE_HEADER)
        w.writerow([_cell(x) for x in row])
    return 0


# -- sweep --------------------------------------------------------------------


def _overall(verdicts, blew_up: bool, damped: bool) -> Stability:
    kinds = {v.stability for v in verdicts}
    if blew_up or Stability.UNSTABLE in kinds:
        return Stability.UNSTABLE
    if kinds == {Stability.ASYMPTOTICALLY_STABLE} and damped:
        return Stability.ASYMPTOTICALLY_STABLE
    if kinds <= {Stability.ASYMPTOTICALLY_STABLE, Stability.STABLE}:
        return Stability.STABLE
    return Stability.MARGINAL


def _sweep_point(cfg: RunConfig, params: StringParams, exc: Excitation, delta: float, k: float) -> dict:
    control = cfg.control_params(exc, delta=delta, k=k)
    ms1 = ModeSystem(1, params, control)
    out = {
        "margin": stability.threshold_margin(ms1),
        "side": stability.threshold_test(ms1, cfg.epsilon).side,
        "boundary_delta": float(stability.boundary_delta(params, control, k)),
    }
    sys_ = galerkin.GalerkinSystem(params, control, cfg.N_sim)
    verdicts = stability.classify_modes(params, control, sys_.modes, cfg.steps_per_period)
    traj = galerkin.integrate(sys_, _initial(cfg, sys_.n_modes), cfg.periods, cfg.steps_per_period)
    if traj.blew_up:
        fit = galerkin.DecayFit(-math.inf, math.inf, float("nan"))
    else:
        fit = galerkin.fit_decay_rate(traj, min(cfg.burn_in, max(0, cfg.periods - 8)))
    out["modes"] = [v.stability.value for v in verdicts]
    out["verdict"] = _overall(verdicts, traj.blew_up, params.damped and control.cutoff_N is None).value
    out["sigma"] = fit.sigma
    out["r_squared"] = fit.r_squared
    return out


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return min(8, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def cmd_sweep(cfg: RunConfig) -> int:
    """Evaluate every ``(delta, k)`` of the grids; rows ordered by ``k`` index then ``delta`` index."""
    if not cfg.delta_grid or not cfg.k_grid:
        raise ConfigError("sweep needs non-empty delta_grid and k_grid")
    params = cfg.string_params()
    exc = cfg.build_excitation()
    grid = [(i, j, k, d) for i, k in enumerate(cfg.k_grid) for j, d in enumerate(cfg.delta_grid)]

    def run(item):
        i, j, k, d = item
        try:
            return _sweep_point(cfg, params, exc, d, k), ""
        except Exception as exc_:  # recorded per row; the sweep continues
            return None, f"{type(exc_).__name__}: {exc_}"

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(run, grid))

    header = ["k_index", "delta_index", "k", "delta", "margin", "side", "boundary_delta"]
    header += [f"verdict_{n}" for n in range(1, cfg.N_sim + 1)]
    header += ["verdict", "sigma", "r_squared", "error"]
    rows = []
    for (i, j, k, d), (res, err) in zip(grid, results):
        if res is None:
            rows.append([i, j, k, d] + [None] * (len(header) - 5) + [err])
            continue
        rows.append(
            [i, j, k, d, res["margin"], res["side"], res["boundary_delta"], *res["modes"],
             res["verdict"], res["sigma"], res["r_squared"], err]
        )  # fmt: skip
    _write_csv(_out(cfg, "sweep.csv"), cfg, header, rows)
    if cfg.svg:
        _write_svg(_out(cfg, "sweep.svg"), cfg, params, exc, grid, results)
    failed = sum(1 for r, _ in results if r is None)
    print(f"sweep: {len(grid)} points, {failed} failed -> {_out(cfg, 'sweep.csv')}")
    return 0


def sweep_boundary_offsets(delta_grid, k_grid, verdicts, boundary) -> list[int]:
    """For each ``k`` row, cells whose verdict disagrees with the analytic side of the boundary.

    ``verdicts`` is indexed ``[k_index][delta_index]``; ``boundary[i]`` is the
    threshold gain for ``k_grid[i]``.  Returns, per disagreeing cell, how many
    grid cells separate it from the boundary (0 means the boundary falls
    between it and a neighbour).
    """
    d = np.asarray(delta_grid, dtype=float)
    offsets = []
    for i in range(len(k_grid)):
        for j, v in enumerate(verdicts[i]):
            predicted_stable = d[j] > boundary[i]
            stable = v in (Stability.ASYMPTOTICALLY_STABLE.value, Stability.STABLE.value)
            if stable != predicted_stable:
                # cells between d[j] and the boundary, exclusive
                between = int(np.sum((d > min(d[j], boundary[i])) & (d < max(d[j], boundary[i]))))
                offsets.append(between)
    return offsets


_COLORS = {
    "asymptotically_stable": "#2c7a3f",
    "stable": "#6fb3d2",
    "unstable": "#c0392b",
    "marginal": "#999999",
    None: "#000000",
}


def _write_svg(path: Path, cfg, params, exc, grid, results) -> None:
    W, H, m = 560, 480, 60
    nd, nk = len(cfg.delta_grid), len(cfg.k_grid)
    cw, ch = (W - 2 * m) / nd, (H - 2 * m) / nk
    d_idx = np.arange(nd)
    k_idx = np.arange(nk)
    dg, kg = np.asarray(cfg.delta_grid), np.asarray(cfg.k_grid)
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">',
        f"<title>{cfg.echo()[2:]}</title>",
    ]
    for (i, j, k, d), (res, _) in zip(grid, results):
        color = _COLORS[res["verdict"] if res else None]
        x, y = m + j * cw, H - m - (i + 1) * ch
        lines.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{cw:.2f}" height="{ch:.2f}" fill="{color}"/>')
    # boundary curve, placed by interpolating grid values onto cell centres
    ks = np.linspace(kg.min(), kg.max(), 200)
    ds = stability.boundary_delta(params, cfg.control_params(exc), ks)
    keep = (ds >= dg.min()) & (ds <= dg.max())
    if keep.any() and nd > 1 and nk > 1:
        xs = m + (np.interp(ds[keep], dg, d_idx) + 0.5) * cw
        ys = H - m - (np.interp(ks[keep], kg, k_idx) + 0.5) * ch
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
        lines.append(f'<polyline points="{pts}" fill="none" stroke="#000" stroke-width="2"/>')
    for j, d in enumerate(dg):
        lines.append(f'<text x="{m + (j + 0.5) * cw:.2f}" y="{H - m + 16}" text-anchor="middle">{d:.3g}</text>')
    for i, k in enumerate(kg):
        lines.append(f'<text x="{m - 6}" y="{H - m - (i + 0.5) * ch + 4:.2f}" text-anchor="end">{k:.3g}</text>')
    lines.append(f'<text x="{W / 2}" y="{H - 16}" text-anchor="middle">delta</text>')
    lines.append(f'<text x="16" y="{H / 2}" text-anchor="middle" transform="rotate(-90 16 {H / 2})">k</text>')
    lines.append("</svg>")
    path.write_text("\n".join(lines) + "\n")


# -- simulate -----------------------------------------------------------------


def _initial(cfg: RunConfig, n_modes: int) -> np.ndarray:
    if cfg.init == "zero":
        return np.zeros((n_modes, 2))
    return galerkin.random_initial_data(n_modes, cfg.seed)


def cmd_simulate(cfg: RunConfig) -> int:
    """Per-period norms and tail functional, plus a summary file; blow-up is a result, not an error."""
    params = cfg.string_params()
    control = cfg.control_params()
    try:
        rep = galerkin.end_to_end_verdict(
            params, control,
            N_sim=cfg.N_sim, periods=cfg.periods, tail=cfg.tail,
            steps_per_period=cfg.steps_per_period, seed=cfg.seed, epsilon=cfg.epsilon,
            burn_in=min(cfg.burn_in, max(0, cfg.periods - 8)),
            init=_initial(cfg, cfg.N_sim + cfg.tail),
        )  # fmt: skip
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    traj = rep.trajectory
    rows = [
        (int(t), h, v, h + v, V)
        for t, h, v, V in zip(traj.times, traj.h1_sq, traj.vel_sq, traj.lyapunov)
    ]
    _write_csv(
        _out(cfg, "trajectory.csv"), cfg, ["period", "h1_sq", "vel_sq", "norm", "lyapunov"], rows
    )
    fit = rep.fit
    summary = [fit.sigma, fit.C, fit.r_squared, rep.verdict.value, traj.blew_up, len(traj.times) - 1]
    _write_csv(
        _out(cfg, "summary.csv"), cfg,
        ["sigma", "C", "r_squared", "verdict", "blew_up", "periods_completed"], [summary],
    )  # fmt: skip
    print(f"verdict: {rep.verdict}  sigma={fit.sigma!r}  C={fit.C!r}  r2={fit.r_squared!r}")
    if traj.blew_up:
        print("blow-up: norms exceeded the overflow guard")
    for note in rep.notes:
        print(f"note: {note}")
    return 0


# -- entry point --------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="vibrastab",
        description="Vibrational stabilization of a disturbed string: verification, mode reports, sweeps and simulation.",
        epilog="Any configuration key may be overridden with --key value.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("verify", "check the zero-mean assumptions on the excitation"),
        ("mode", "report one mode (select it with --n)"),
        ("sweep", "evaluate a (delta, k) grid"),
        ("simulate", "simulate the Galerkin system"),
    ):
        sp = sub.add_parser(name, help=help_, allow_abbrev=False)
        sp.add_argument("--config", help="flat key = value configuration file")
    return p


_COMMANDS = {"verify": cmd_verify, "mode": cmd_mode, "sweep": cmd_sweep, "simulate": cmd_simulate}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args, rest = parser.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config, _parse_overrides(rest))
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"vibrastab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
