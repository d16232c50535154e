"""``zshift`` command-line front end.

Angles are degrees on the command line and in printed output; everything
below this module works in radians. Every command writes its artifacts and a
``manifest.json`` into ``--out``, guarded by a lockfile.

Exit codes: 0 success, 1 tolerance or stability failure, 2 input error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, cases, csvio, stability
from .errors import InputError, NumericalError
from .freqresp import Domain, FrequencyGrid, Frame, make_lin_grid, make_log_grid
from .frames import ReferenceAngle, rotate, to_domain
from .network import (aggregate, fundamental_flow, load_network, local_models, parse_network)

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
DEFAULT_GRID = "1:1000:31:log"
BUILTIN_PREFIX = "builtin:"
LOCK_NAME = ".zshift.lock"
ELEMENTS = ("11", "12", "21", "22")


# -- argument helpers ------------------------------------------------------------

def parse_grid(spec: str) -> FrequencyGrid:
    """``fmin:fmax:n[:log|lin]``."""
    parts = spec.split(":")
    if len(parts) not in (3, 4):
        raise InputError(f"grid spec {spec!r}: expected fmin:fmax:n[:log|lin]")
    try:
        f_min, f_max, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise InputError(f"grid spec {spec!r}: fmin, fmax must be numbers and n an integer") \
            from None
    scale = parts[3] if len(parts) == 4 else "log"
    if scale == "log":
        return make_log_grid(f_min, f_max, n)
    if scale == "lin":
        return make_lin_grid(f_min, f_max, n)
    raise InputError(f"grid spec {spec!r}: scale must be 'log' or 'lin'")


def read_config(ref: str):
    """A config path, or ``builtin:<name>`` for a bundled case. Returns (net, text)."""
    if ref.startswith(BUILTIN_PREFIX):
        name = ref[len(BUILTIN_PREFIX):]
        try:
            text = cases.case_text(name)
        except KeyError as exc:
            raise InputError(str(exc.args[0])) from None
        return parse_network(text, ref), text
    path = Path(ref)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {ref}: {exc.strerror}") from None
    return load_network(path), text


class Output:
    """Output directory with a lockfile, atomic file writes and a manifest."""

    def __init__(self, directory: str, command: str, argv: list[str]):
        self.dir = Path(directory)
        self.manifest = {"tool": "zshift", "version": __version__, "command": command,
                         "argv": list(argv), "output_dir": str(self.dir), "outputs": []}
        self._lock = None

    def __enter__(self):
        self.dir.mkdir(parents=True, exist_ok=True)
        lock = self.dir / LOCK_NAME
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise InputError(f"{self.dir} is locked by another run (remove {lock} if stale)") \
                from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        self._lock = lock
        return self

    def __exit__(self, *exc):
        with contextlib.suppress(OSError):
            self.write("manifest.json", json.dumps(self.manifest, indent=2, sort_keys=True) + "\n",
                       record=False)
        with contextlib.suppress(OSError):
            self._lock.unlink()
        return False

    def write(self, name: str, text: str, record: bool = True) -> Path:
        target = self.dir / name
        fd, tmp = tempfile.mkstemp(dir=self.dir, prefix=f".{name}.", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, target)
        if record:
            self.manifest["outputs"].append(name)
        return target


def _record_config(out: Output, ref: str, text: str) -> None:
    out.manifest["config"] = ref
    out.manifest["config_sha256"] = hashlib.sha256(text.encode("utf-8")).hexdigest()


# -- commands --------------------------------------------------------------------

def cmd_flow(args, out: Output) -> int:
    net, text = read_config(args.config)
    _record_config(out, args.config, text)
    flow = fundamental_flow(net)
    lines = ["node,theta_deg,v_peak_v,v_ll_rms_v"]
    print(f"reference node: {net.reference_node}   iterations: {flow.iterations}   "
          f"kcl residual: {flow.residual:.3e} A")
    print(f"{'node':<10}{'theta [deg]':>14}{'|V| LL rms [V]':>18}")
    scale = math.sqrt(1.5)
    for node in net.nodes:
        v = flow.voltages[node]
        deg = ReferenceAngle(float(np.angle(v))).degrees
        lines.append(f"{node},{deg!r},{abs(v)!r},{abs(v) * scale!r}")
        print(f"{node:<10}{deg:>14.3f}{abs(v) * scale:>18.2f}")
    out.write("flow.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def _pipeline(args, out: Output, grid: FrequencyGrid):
    net, text = read_config(args.config)
    _record_config(out, args.config, text)
    out.manifest["grid"] = args.grid
    flow = fundamental_flow(net)
    models = local_models(net, flow, grid)
    return net, flow, models


def cmd_impedance(args, out: Output) -> int:
    grid = parse_grid(args.grid)
    net, flow, models = _pipeline(args, out, grid)
    domain = Domain(args.domain)
    out.manifest.update(domain=args.domain, side=args.side, rotate=not args.no_rotate,
                        seed=args.seed)
    sides = ("load", "source") if args.side == "both" else (args.side,)
    for side in sides:
        try:
            z = aggregate(net, flow, models, side, rotate=not args.no_rotate,
                          order_seed=args.seed)
        except InputError as exc:
            raise InputError(f"aggregating {side} side: {exc}") from None
        except NumericalError as exc:
            raise NumericalError(f"aggregating {side} side: {exc}") from None
        z = to_domain(z, domain)
        suffix = "_unrotated" if args.no_rotate and side == "load" else ""
        out.write(f"z_{side}_{args.domain}{suffix}.csv",
                  csvio.dumps_response(z, {"side": side, "interface": net.interface,
                                           "reference_node": net.reference_node}))
    if args.verbose:
        for u in net.units:
            z = models[u.name]
            theta = flow.theta(u.node)
            meta = {"unit": u.name, "node": u.node, "theta_deg": repr(theta.degrees)}
            out.write(f"local_{u.name}_{args.domain}.csv",
                      csvio.dumps_response(to_domain(z, domain), meta))
            out.write(f"global_{u.name}_{args.domain}.csv",
                      csvio.dumps_response(rotate(to_domain(z, domain), theta), meta))
    print(f"wrote {', '.join(out.manifest['outputs'])} to {out.dir}")
    return EXIT_OK


def cmd_sweep(args, out: Output) -> int:
    from .simkit import SimConfig, build_dynamics, sweep_impedance

    grid = parse_grid(args.grid)
    net, text = read_config(args.config)
    _record_config(out, args.config, text)
    cfg = SimConfig(dt=args.dt, t_settle=args.t_settle, amp_rel=args.amp,
                    integrator=args.integrator, backend=args.backend, threads=args.threads,
                    injection_node=args.injection_node,
                    dump_dir=str(out.dir / "timeseries") if args.dump_timeseries else None)
    out.manifest.update(grid=args.grid, domain=args.domain, sim={
        "dt": cfg.dt, "t_settle": cfg.t_settle, "amp_rel": cfg.amp_rel,
        "integrator": cfg.integrator, "backend": cfg.backend, "threads": cfg.threads})
    flow = fundamental_flow(net)
    model = build_dynamics(net, flow)
    meas = sweep_impedance(model, cfg, grid)
    domain = Domain(args.domain)
    meta = {"side": "load", "interface": net.interface, "reference_node": net.reference_node,
            "source": "sweep", "backend": meas.meta["backend"]}
    out.write(f"measured_load_{args.domain}.csv",
              csvio.dumps_response(to_domain(meas.response, domain), meta))
    out.write(f"measured_source_{args.domain}.csv",
              csvio.dumps_response(to_domain(meas.source, domain), {**meta, "side": "source"}))
    diag = ["freq_hz,condition,drift,windows"]
    for f, c, d, w in zip(grid.points, meas.condition, meas.drift, meas.windows):
        diag.append(f"{float(f)!r},{float(c)!r},{float(d)!r},{int(w)}")
    out.write("sweep_diagnostics.csv", "\n".join(diag) + "\n")
    print(f"swept {len(grid)} points with the {meas.meta['backend']} kernel; "
          f"worst drift {meas.drift.max():.2e}, worst condition {meas.condition.max():.3g}")
    return EXIT_OK


def compare_responses(a, b, floor: float = 1e-9):
    """Per-element magnitude relative error and phase error (deg), shape (n, 4).

    Elements negligible in both inputs (below ``floor`` times the pointwise
    Frobenius norm) are reported as zero error.
    """
    if a.grid != b.grid:
        raise InputError("the two responses are sampled on different grids")
    if a.domain is not b.domain:
        raise InputError(f"domain mismatch: {a.domain.value} vs {b.domain.value}")
    va = a.values.reshape(-1, 4)
    vb = b.values.reshape(-1, 4)
    norm = np.maximum(np.linalg.norm(va, axis=1), np.linalg.norm(vb, axis=1))[:, None]
    tiny = (np.abs(va) <= floor * norm) & (np.abs(vb) <= floor * norm)
    with np.errstate(divide="ignore", invalid="ignore"):
        mag = np.abs(np.abs(vb) / np.abs(va) - 1.0)
        dphi = np.angle(vb) - np.angle(va)
        phase = np.degrees(np.abs((dphi + np.pi) % (2 * np.pi) - np.pi))
    mag = np.where(tiny, 0.0, np.nan_to_num(mag, nan=np.inf, posinf=np.inf))
    phase = np.where(tiny, 0.0, np.nan_to_num(phase, nan=180.0))
    return mag, phase


def bode_csv(series: list) -> str:
    lines = ["freq_hz,element,series,mag_db,phase_deg"]
    for label, resp in series:
        v = resp.values.reshape(-1, 4)
        with np.errstate(divide="ignore"):
            db = 20.0 * np.log10(np.abs(v))
        ph = np.degrees(np.angle(v))
        for k, f in enumerate(resp.grid.points):
            for e, name in enumerate(ELEMENTS):
                lines.append(f"{float(f)!r},{name},{label},{float(db[k, e])!r},"
                             f"{float(ph[k, e])!r}")
    return "\n".join(lines) + "\n"


def cmd_compare(args, out: Output) -> int:
    a, _ = csvio.read_response(args.reference)
    b, _ = csvio.read_response(args.candidate)
    out.manifest.update(reference=args.reference, candidate=args.candidate,
                        tolerances={"mag_rel": args.tol_mag, "phase_deg": args.tol_phase})
    mag, phase = compare_responses(a, b)
    f = a.grid.points
    rows = ["element,max_mag_err,freq_at_max_mag_hz,max_phase_err_deg,freq_at_max_phase_hz,pass"]
    print(f"{'element':<8}{'max |mag| err':>15}{'at [Hz]':>11}{'max phase err':>15}{'at [Hz]':>11}")
    ok_all = True
    for e, name in enumerate(ELEMENTS):
        km, kp = int(np.argmax(mag[:, e])), int(np.argmax(phase[:, e]))
        ok = bool(mag[km, e] <= args.tol_mag and phase[kp, e] <= args.tol_phase)
        ok_all &= ok
        rows.append(f"{name},{float(mag[km, e])!r},{float(f[km])!r},{float(phase[kp, e])!r},"
                    f"{float(f[kp])!r},{str(ok).lower()}")
        print(f"Z{name:<7}{mag[km, e]:>15.3e}{f[km]:>11.4g}{phase[kp, e]:>14.4f}°{f[kp]:>11.4g}"
              f"{'' if ok else '   FAIL'}")
    out.write("compare_summary.csv", "\n".join(rows) + "\n")
    out.write("bode.csv", bode_csv([(Path(args.reference).stem, a), (Path(args.candidate).stem, b)]))
    out.manifest["passed"] = ok_all
    print("within tolerance" if ok_all else
          f"outside tolerance (mag {args.tol_mag:g}, phase {args.tol_phase:g} deg)")
    return EXIT_OK if ok_all else EXIT_FAIL


def cmd_stability(args, out: Output) -> int:
    grid = parse_grid(args.grid)
    net, flow, models = _pipeline(args, out, grid)
    z_load = aggregate(net, flow, models, "load")
    z_source = aggregate(net, flow, models, "source")
    report = stability.analyze_stability(z_source, z_load, args.rhp_poles)
    out.write("nyquist.csv", stability.nyquist_csv(report))
    out.write("stability_report.txt", report.to_text())
    out.manifest.update(rhp_poles_open_loop=args.rhp_poles, verdict=report.verdict.value)
    print(report.to_text(), end="")
    return EXIT_OK if report.verdict is stability.Verdict.STABLE else EXIT_FAIL


def cmd_rotate(args, out: Output) -> int:
    z, meta = csvio.read_response(args.input)
    theta = ReferenceAngle.from_degrees(args.theta_deg)
    if args.inverse:
        if not z.frame.is_global:
            raise InputError("--inverse expects a global-frame input")
        if not args.node:
            raise InputError("--inverse needs --node to label the local frame")
        local = Frame(args.node)
        res = rotate(z.replace(frame=local), ReferenceAngle(-theta.theta)).replace(frame=local)
    else:
        res = rotate(z, theta)
    extra = {k: v for k, v in meta.items() if k not in ("domain", "frame", "kind")}
    extra["rotated_by_deg"] = repr(-args.theta_deg if args.inverse else args.theta_deg)
    name = f"{Path(args.input).stem}_{'local' if args.inverse else 'global'}.csv"
    out.write(name, csvio.dumps_response(res, extra))
    out.manifest.update(input=args.input, theta_deg=args.theta_deg, inverse=args.inverse)
    print(f"wrote {out.dir / name} (frame {res.frame})")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zshift", description="Impedance aggregation with "
                                "local-to-global frame alignment, sweep validation and GNC.")
    p.add_argument("--version", action="version", version=f"zshift {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True, grid=True):
        if config:
            sp.add_argument("--config", required=True,
                            help="network TOML, or builtin:case_study|passive|no_load")
        if grid:
            sp.add_argument("--grid", default=DEFAULT_GRID, help="fmin:fmax:n[:log|lin]")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--verbose", "-v", action="store_true")

    sp = sub.add_parser("flow", help="fundamental-frequency power flow")
    common(sp, grid=False)
    sp.set_defaults(func=cmd_flow)

    sp = sub.add_parser("impedance", help="analytic source/load impedances at the interface")
    common(sp)
    sp.add_argument("--domain", choices=("dq", "pn"), default="dq")
    sp.add_argument("--side", choices=("load", "source", "both"), default="both")
    sp.add_argument("--no-rotate", action="store_true",
                    help="skip local-to-global alignment (negative control)")
    sp.set_defaults(func=cmd_impedance)

    sp = sub.add_parser("sweep", help="measure the interface impedance by time-domain injection")
    common(sp)
    sp.add_argument("--domain", choices=("dq", "pn"), default="dq")
    sp.add_argument("--dt", type=float, default=1e-5)
    sp.add_argument("--t-settle", type=float, default=0.3)
    sp.add_argument("--amp", type=float, default=0.01, help="injection amplitude, p.u. of source")
    sp.add_argument("--integrator", choices=("rk4", "trapezoidal"), default="rk4")
    sp.add_argument("--backend", choices=("cython", "python"), default=None)
    sp.add_argument("--threads", type=int, default=None)
    sp.add_argument("--injection-node", default=None)
    sp.add_argument("--dump-timeseries", action="store_true")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("compare", help="compare two impedance CSV files")
    sp.add_argument("reference")
    sp.add_argument("candidate")
    sp.add_argument("--tol-mag", type=float, default=0.01, help="relative magnitude tolerance")
    sp.add_argument("--tol-phase", type=float, default=1.0, help="phase tolerance, degrees")
    common(sp, config=False, grid=False)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("stability", help="generalized Nyquist criterion at the interface")
    common(sp)
    sp.add_argument("--rhp-poles", type=int, default=0,
                    help="open-loop right-half-plane poles of the minor loop gain")
    sp.set_defaults(func=cmd_stability)

    sp = sub.add_parser("rotate", help="refer a local-frame impedance CSV to the global frame")
    sp.add_argument("input")
    sp.add_argument("theta_deg", type=float)
    sp.add_argument("--inverse", action="store_true",
                    help="global to local: rotate by -theta and tag the frame with --node")
    sp.add_argument("--node", default=None)
    common(sp, config=False, grid=False)
    sp.set_defaults(func=cmd_rotate)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    out_dir = args.out or os.path.join("zshift_out", args.command)
    try:
        with Output(out_dir, args.command, argv) as out:
            code = _run(args, out)
            out.manifest["exit_code"] = code
            return code
    except InputError as exc:
        return _fail(args, "error", exc, EXIT_INPUT)
    except OSError as exc:
        return _fail(args, "error", exc, EXIT_INPUT)


def _fail(args, label: str, exc: Exception, code: int) -> int:
    print(f"zshift {args.command}: {label}: {exc}", file=sys.stderr)
    return code


def _run(args, out: Output) -> int:
    try:
        return args.func(args, out)
    except InputError as exc:
        out.manifest["error"] = str(exc)
        return _fail(args, "error", exc, EXIT_INPUT)
    except NumericalError as exc:
        out.manifest["error"] = str(exc)
        return _fail(args, "numerical failure", exc, EXIT_NUMERIC)
    except OSError as exc:
        out.manifest["error"] = str(exc)
        return _fail(args, "error", exc, EXIT_INPUT)

if __name__ == "__main__":
    sys.exit(main())
