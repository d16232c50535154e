"""Perturbation-injection frequency sweep and free-response runs.

A small series voltage is injected between the Thevenin source and the
interface node, first along d and then along q, one frequency at a time.
After settling, the interface voltage and current are reduced to phasors
with a single-bin DFT over an integer number of perturbation periods, and
the 2x2 impedances follow from

    [dV1 dV2] = Z_load [dI1 dI2],     -[dVs1 dVs2] = Z_source [dI1 dI2]

where ``dVs`` is the source-side voltage (interface voltage minus the
injected one).
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InputError, SweepError
from ..freqresp import GLOBAL, Domain, FrequencyGrid, FrequencyResponse2x2, Kind
from ..frames import dq_to_pn
from . import kernel
from .dynamics import SimModel, jacobian


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-5
    t_settle: float = 0.3
    n_cycles_measure: int = 1
    min_window_s: float = 0.05
    amp_rel: float = 0.01
    injection_node: str | None = None
    integrator: str = "rk4"
    drift_tol: float = 1e-4
    drift_max: float = 1e-3
    max_windows: int = 40
    cond_max: float = 1e6
    backend: str | None = None
    threads: int | None = None
    dump_dir: str | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise InputError(f"dt must be > 0, got {self.dt}")
        if not 0 < self.amp_rel <= 0.1:
            raise InputError(f"amp_rel must lie in (0, 0.1], got {self.amp_rel}")
        if self.integrator not in ("rk4", "trapezoidal"):
            raise InputError(f"integrator must be 'rk4' or 'trapezoidal', got {self.integrator!r}")
        if int(self.n_cycles_measure) != self.n_cycles_measure or self.n_cycles_measure < 1:
            raise InputError("n_cycles_measure must be a positive integer")
        if self.t_settle < 0:
            raise InputError("t_settle must be >= 0")

    def check_grid(self, grid: FrequencyGrid) -> None:
        f_max = float(grid.points[-1])
        need = 1.0 / (20.0 * f_max)
        if self.dt > need:
            raise InputError(f"dt = {self.dt:g} s is too coarse for {f_max:g} Hz; "
                             f"need dt <= {need:.3g} s (20 steps per period)")


@dataclass
class MeasuredImpedance:
    """Sweep result: load-side impedance (the measurement) plus diagnostics."""

    response: FrequencyResponse2x2
    source: FrequencyResponse2x2
    condition: np.ndarray       # cond([dI1 dI2]) per frequency
    drift: np.ndarray           # last window-to-window relative change
    windows: np.ndarray         # windows used (max over the two injections)
    meta: dict = field(default_factory=dict)


def single_bin_dft(x: np.ndarray, t0: float, dt: float, f: float) -> np.ndarray:
    """Phasor(s) ``X`` of ``Re(X e^{j w t})`` from samples over whole periods.

    ``x`` has shape ``(n,)`` or ``(n, m)``; samples are at ``t0 + k dt``.
    """
    n = x.shape[0]
    t = t0 + dt * np.arange(n)
    ph = np.exp(-2j * np.pi * f * t)
    return (2.0 / n) * (ph @ x)


def _newton_matrix(model: SimModel, dt: float) -> np.ndarray:
    jac = jacobian(model)
    return np.linalg.inv(np.eye(jac.shape[0]) - 0.5 * dt * jac)


def _method(cfg: SimConfig) -> int:
    return kernel.RK4 if cfg.integrator == "rk4" else kernel.TRAPEZOIDAL


def _measure_point(model: SimModel, cfg: SimConfig, f: float):
    n_per = max(20, math.ceil(1.0 / (f * cfg.dt) - 1e-9))
    dt = 1.0 / (f * n_per)
    cycles = max(int(cfg.n_cycles_measure), math.ceil(cfg.min_window_s * f - 1e-9))
    n_win = cycles * n_per
    n_settle = math.ceil(cfg.t_settle / dt)
    amp = cfg.amp_rel * model.v_source_peak
    omega = 2 * np.pi * f
    method = _method(cfg)
    w = _newton_matrix(model, dt) if method == kernel.TRAPEZOIDAL else None

    cols_v, cols_i, cols_vs = [], [], []
    drift_worst = 0.0
    windows_used = 0
    for axis in (0, 1):
        inj = np.zeros(3)
        inj[axis] = amp
        inj[2] = omega
        x = model.x0.copy()
        kernel.run(model, x, 0.0, dt, n_settle, inj, method, w, record=False,
                   backend=cfg.backend)
        t = n_settle * dt
        prev = None
        drift = math.inf
        chunks = []
        for k in range(cfg.max_windows):
            out = kernel.run(model, x, t, dt, n_win, inj, method, w, backend=cfg.backend)
            if not np.all(np.isfinite(out)):
                raise SweepError("simulation diverged during the sweep", f)
            if cfg.dump_dir is not None:
                chunks.append((t, out))
            ph = single_bin_dft(out - model.out0, t, dt, f)
            t += n_win * dt
            if prev is not None:
                drift = float(np.linalg.norm(ph - prev) / np.linalg.norm(ph))
                if drift < cfg.drift_tol:
                    break
            prev = ph
        windows_used = max(windows_used, k + 1)
        if drift > cfg.drift_max:
            raise SweepError(f"response not settled: window-to-window drift {drift:.2e} "
                             f"exceeds {cfg.drift_max:g}", f)
        drift_worst = max(drift_worst, drift)
        if cfg.dump_dir is not None:
            _dump(cfg.dump_dir, f, axis, dt, chunks)
        v_inj = np.zeros(2, dtype=complex)
        v_inj[axis] = amp
        cols_v.append(ph[:2])
        cols_i.append(ph[2:])
        cols_vs.append(ph[:2] - v_inj)
    dv = np.column_stack(cols_v)
    di = np.column_stack(cols_i)
    dvs = np.column_stack(cols_vs)
    cond = float(np.linalg.cond(di))
    if not cond < cfg.cond_max:
        raise SweepError(f"injection pair is ill-conditioned (cond = {cond:.3g})", f)
    di_inv = np.linalg.inv(di)
    return dv @ di_inv, -dvs @ di_inv, cond, drift_worst, windows_used


def _dump(directory: str, f: float, axis: int, dt: float, chunks) -> None:
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    name = path / f"timeseries_{f:.6g}Hz_{'dq'[axis]}.csv"
    with open(name, "w", encoding="utf-8") as fh:
        fh.write("t,vd,vq,id,iq\n")
        for t0, out in chunks:
            for k, row in enumerate(out):
                fh.write(",".join(repr(float(v)) for v in (t0 + k * dt, *row)) + "\n")


def thread_count(cfg: SimConfig | None = None) -> int:
    if cfg is not None and cfg.threads:
        return max(1, int(cfg.threads))
    env = os.environ.get("ZSHIFT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"ZSHIFT_THREADS must be an integer, got {env!r}") from None
    return max(1, min(8, os.cpu_count() or 1))


def sweep_impedance(model: SimModel, cfg: SimConfig, grid: FrequencyGrid) -> MeasuredImpedance:
    """Measure the interface impedances at every grid frequency."""
    cfg.check_grid(grid)
    if cfg.injection_node is not None and cfg.injection_node != model.net.interface:
        raise InputError(f"series injection is only supported at the interface node "
                         f"{model.net.interface!r}, not {cfg.injection_node!r}")
    freqs = [float(f) for f in grid.points]
    backend = cfg.backend or kernel.BACKEND
    n_threads = thread_count(cfg) if backend != "python" else 1
    if n_threads > 1 and len(freqs) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(lambda f: _measure_point(model, cfg, f), freqs))
    else:
        results = [_measure_point(model, cfg, f) for f in freqs]
    z_load = np.array([r[0] for r in results])
    z_src = np.array([r[1] for r in results])
    resp = FrequencyResponse2x2(grid, z_load, Domain.DQ, GLOBAL, Kind.IMPEDANCE)
    src = FrequencyResponse2x2(grid, z_src, Domain.DQ, GLOBAL, Kind.IMPEDANCE)
    return MeasuredImpedance(
        resp, src,
        condition=np.array([r[2] for r in results]),
        drift=np.array([r[3] for r in results]),
        windows=np.array([r[4] for r in results]),
        meta={"backend": backend, "dt": cfg.dt, "amp_rel": cfg.amp_rel,
              "integrator": cfg.integrator},
    )


def measure_pn(measured: MeasuredImpedance) -> FrequencyResponse2x2:
    """The measured load impedance transformed to the modified sequence domain."""
    return dq_to_pn(measured.response)


@dataclass
class FreeResponse:
    t: np.ndarray               # end time of each chunk
    peak: np.ndarray            # peak relative output deviation within each chunk
    diverged: bool

    def bounded(self, settle_fraction: float = 0.2, growth: float = 1.0) -> bool:
        """True when the late-time deviation stays below ``growth`` times the kick response.

        A limit cycle that grows out of a small kick counts as unbounded: the
        equilibrium itself is unstable even if saturation caps the swing.
        """
        if self.diverged or not np.all(np.isfinite(self.peak)):
            return False
        n = self.peak.size
        k = max(1, int(round(settle_fraction * n)))
        return bool(np.max(self.peak[-k:]) < growth * self.peak[0])


def free_response(model: SimModel, t_end: float = 5.0, pulse_rel: float = 0.05,
                  pulse_s: float = 2e-3, dt: float = 2e-5, chunk_s: float = 0.05,
                  blowup: float = 10.0, backend: str | None = None) -> FreeResponse:
    """Unperturbed run from equilibrium with a short d-axis voltage pulse at t = 0.

    Records, per chunk, the peak of ``|dv|/|v0| + |di|/|i0|`` at the interface.
    Stops early (``diverged``) once that exceeds ``blowup``.
    """
    x = model.x0.copy()
    v0 = max(float(np.hypot(*model.out0[:2])), 1e-12)
    i0 = max(float(np.hypot(*model.out0[2:])), 1.0)
    amp = pulse_rel * model.v_source_peak
    n_pulse = max(1, int(round(pulse_s / dt)))
    n_chunk = max(1, int(round(chunk_s / dt)))
    out = kernel.run(model, x, 0.0, dt, n_pulse, np.array([amp, 0.0, 0.0]), backend=backend)
    t = n_pulse * dt
    times, peaks = [t], [_peak(out, model.out0, v0, i0)]
    diverged = False
    zero = np.zeros(3)
    while t < t_end - 1e-12:
        out = kernel.run(model, x, t, dt, n_chunk, zero, backend=backend)
        t += n_chunk * dt
        p = _peak(out, model.out0, v0, i0)
        times.append(t)
        peaks.append(p)
        if not math.isfinite(p) or p > blowup:
            diverged = True
            break
    return FreeResponse(np.array(times), np.array(peaks), diverged)


def _peak(out: np.ndarray, out0: np.ndarray, v0: float, i0: float) -> float:
    d = out - out0
    dev = np.hypot(d[:, 0], d[:, 1]) / v0 + np.hypot(d[:, 2], d[:, 3]) / i0
    return float(np.max(dev)) if np.all(np.isfinite(dev)) else math.inf
