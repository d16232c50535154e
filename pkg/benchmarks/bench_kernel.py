"""Compiled vs pure-Python simulation kernel on the case-study network.

    python benchmarks/bench_kernel.py [--steps N] [--repeat R] [--sweep-points K]

Reports wall time per backend for a plain RK4 run, a trapezoidal run, and a
short frequency sweep, plus the speed-up and the largest output difference.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from zshift import cases, freqresp as fr, network as nw
from zshift.simkit import SimConfig, build_dynamics, jacobian, kernel, sweep_impedance


def _best(fn, repeat: int):
    best, result = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def bench(steps: int = 20000, repeat: int = 3, sweep_points: int = 3, dt: float = 1e-5) -> list:
    net = cases.load_case("case_study")
    model = build_dynamics(net, nw.fundamental_flow(net))
    inj = np.array([0.01 * model.v_source_peak, 0.0, 2 * np.pi * 23.0])
    w = np.linalg.inv(np.eye(model.n_states) - 0.5 * dt * jacobian(model))
    backends = [b for b in ("cython", "python") if b in kernel.BACKENDS]

    def stepper(backend, method):
        def go():
            x = model.x0.copy()
            return kernel.run(model, x, 0.0, dt, steps, inj, method,
                              w if method == kernel.TRAPEZOIDAL else None, backend=backend)
        return go

    rows = []
    for label, method in (("rk4", kernel.RK4), ("trapezoidal", kernel.TRAPEZOIDAL)):
        times, outs = {}, {}
        for b in backends:
            times[b], outs[b] = _best(stepper(b, method), repeat)
        rows.append((f"{label} x{steps} steps", times, outs))
    if sweep_points >= 2:
        grid = fr.make_log_grid(5.0, 500.0, sweep_points)
        times, outs = {}, {}
        for b in backends:
            cfg = SimConfig(backend=b, threads=1)
            times[b], res = _best(lambda: sweep_impedance(model, cfg, grid), 1)
            outs[b] = res.response.values
        rows.append((f"sweep {sweep_points} pts", times, outs))
    return rows


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--steps", type=int, default=20000)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--sweep-points", type=int, default=3, help="0 skips the sweep")
    args = p.parse_args(argv)
    rows = bench(args.steps, args.repeat, args.sweep_points)
    print(f"{'case':<26}{'cython [s]':>12}{'python [s]':>12}{'speed-up':>10}{'max diff':>11}")
    for name, times, outs in rows:
        c, py = times.get("cython"), times.get("python")
        diff = (float(np.abs(outs["cython"] - outs["python"]).max() /
                      np.abs(outs["python"]).max()) if c is not None else float("nan"))
        speed = f"{py / c:>9.1f}x" if c else f"{'n/a':>10}"
        cs = f"{c:>12.4f}" if c is not None else f"{'n/a':>12}"
        print(f"{name:<26}{cs}{py:>12.4f}{speed}{diff:>11.1e}")


if __name__ == "__main__":
    main()
