"""Acceptance gate: criteria 1-9, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or directly with ``python tests/test_acceptance.py``.
"""
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from zshift import cases, converter as cv, frames, freqresp as fr, network as nw, stability as st
from zshift.cli import compare_responses
from zshift.simkit import SimConfig, build_dynamics, free_response, sweep_impedance

RESULTS: list[str] = []
GRID31 = fr.make_log_grid(1.0, 1000.0, 31)
GNC_GRID = fr.make_log_grid(0.1, 1e4, 2000)


@dataclass
class Outcome:
    number: int
    title: str
    checks: dict = field(default_factory=dict)   # name -> (ok, detail)
    elapsed: float = 0.0
    budget: float = math.inf

    def check(self, name: str, ok: bool, detail: str = "") -> None:
        self.checks[name] = (bool(ok), detail)

    @property
    def ok(self) -> bool:
        return all(ok for ok, _ in self.checks.values()) and self.elapsed < self.budget

    def line(self) -> str:
        parts = [f"{k}={d}" if d else k for k, (ok, d) in self.checks.items()]
        failed = [k for k, (ok, _) in self.checks.items() if not ok]
        if self.elapsed >= self.budget:
            failed.append(f"runtime>{self.budget:g}s")
        status = "PASS" if self.ok else "FAIL"
        tail = f" | failed: {', '.join(failed)}" if failed else ""
        return (f"[{status}] criterion {self.number}: {self.title} "
                f"({self.elapsed:.2f}s; {'; '.join(parts)}){tail}")


def _finish(out: Outcome, t0: float) -> Outcome:
    out.elapsed = time.perf_counter() - t0
    line = out.line()
    RESULTS.append(line)
    print(line)
    return out


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


# -- shared sweep data -----------------------------------------------------------

_CACHE: dict = {}


def case_sweep():
    if "case" not in _CACHE:
        net = cases.load_case("case_study")
        flow, models, _, z_load = nw.analyze(net, GRID31)
        t0 = time.perf_counter()
        meas = sweep_impedance(build_dynamics(net, flow), SimConfig(), GRID31)
        _CACHE["case"] = (net, flow, models, z_load, meas, time.perf_counter() - t0)
    return _CACHE["case"]


def _worst(a, b):
    mag, phase = compare_responses(a, b)
    k_m = np.unravel_index(int(np.argmax(mag)), mag.shape)
    k_p = np.unravel_index(int(np.argmax(phase)), phase.shape)
    return float(mag[k_m]), float(phase[k_p]), float(a.grid.points[k_m[0]])


# -- criteria --------------------------------------------------------------------

def criterion_1() -> Outcome:
    out = Outcome(1, "rotation algebra on 1000 random (Z, theta)", budget=5.0)
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    g = fr.FrequencyGrid([10.0])
    worst = {"group": 0.0, "inverse": 0.0, "commute": 0.0, "eig": 0.0, "det": 0.0, "trace": 0.0}
    pn_exact = True
    for _ in range(1000):
        vals = rng.normal(size=(1, 2, 2)) + 1j * rng.normal(size=(1, 2, 2))
        z = fr.FrequencyResponse2x2(g, vals, fr.Domain.DQ, fr.Frame("N"))
        a, b = rng.uniform(-math.pi, math.pi, size=2)
        r_a = frames.rotate(z, a)
        relabel = lambda x: x.replace(frame=fr.Frame("N"))
        worst["group"] = max(worst["group"], _rel(frames.rotate(relabel(r_a), b).values,
                                                  frames.rotate(z, a + b).values))
        worst["inverse"] = max(worst["inverse"],
                               _rel(frames.rotate(relabel(r_a), -a).values, z.values))
        worst["commute"] = max(worst["commute"],
                               _rel(frames.dq_to_pn(r_a).values,
                                    frames.rotate(frames.dq_to_pn(z), a).values))
        scale = np.linalg.norm(vals)
        ea = np.sort_complex(np.linalg.eigvals(r_a.values[0]))
        ez = np.sort_complex(np.linalg.eigvals(vals[0]))
        worst["eig"] = max(worst["eig"], float(np.abs(ea - ez).max() / scale))
        worst["det"] = max(worst["det"], float(abs(fr.det2(r_a.values)[0] - fr.det2(vals)[0])
                                               / scale ** 2))
        worst["trace"] = max(worst["trace"], float(abs(np.trace(r_a.values[0]) - np.trace(vals[0]))
                                                   / scale))
        pn = frames.dq_to_pn(z)
        pr = frames.rotate_pn(pn, a)
        pn_exact &= bool(pr.values[0, 0, 0] == pn.values[0, 0, 0]
                         and pr.values[0, 1, 1] == pn.values[0, 1, 1])
    for k, v in worst.items():
        out.check(k, v <= 1e-12, f"{v:.1e}")
    out.check("pn-diagonal-bit-exact", pn_exact)
    return _finish(out, t0)


def criterion_2() -> Outcome:
    out = Outcome(2, "T_pn = A_z T_dq A_z^-1 over 1000 angles", budget=1.0)
    t0 = time.perf_counter()
    th = np.random.default_rng(2).uniform(-math.pi, math.pi, 1000)
    err = max(float(np.abs(frames.A_Z @ frames.t_dq(x) @ frames.A_Z_INV - frames.t_pn(x)).max())
              for x in th)
    out.check("max-abs-err", err <= 1e-14, f"{err:.1e}")
    return _finish(out, t0)


def criterion_3() -> Outcome:
    out = Outcome(3, "MFD invariance of passive and frozen-PLL models", budget=10.0)
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    grid = fr.make_log_grid(1.0, 1000.0, 31)
    w1 = 2 * math.pi * 50
    mfd = {f"rl_{k}": fr.eval_rl_branch(r, l_h, w1, grid, fr.Frame("N"))
           for k, (r, l_h) in enumerate([(0.04, 1.3e-3), (2.0, 0.0), (0.0, 5e-3), (8.0, 0.02)])}
    net = cases.load_case("case_study")
    flow = nw.fundamental_flow(net)
    for u in net.converters:
        mfd[f"cc_{u.name}"] = cv.linearize_converter(u.params.frozen_pll(),
                                                     flow.operating_point(u), grid, u.node)
    passive = cases.load_case("passive")
    pflow = nw.fundamental_flow(passive)
    mfd["passive_aggregate"] = nw.aggregate(passive, pflow, nw.local_models(passive, pflow, grid)) \
        .replace(frame=fr.Frame("P"))
    all_mfd = all(frames.is_mfd(z) for z in mfd.values())
    worst = 0.0
    for z in mfd.values():
        for th in rng.uniform(-math.pi, math.pi, 10):
            worst = max(worst, float(np.max(np.abs(frames.rotate(z, th).values - z.values)
                                            / np.abs(z.values).max(axis=(1, 2))[:, None, None])))
    out.check(f"is_mfd({len(mfd)} models)", all_mfd)
    out.check("rotation-change", worst <= 1e-9, f"{worst:.1e}")
    active = [cv.linearize_converter(u.params, flow.operating_point(u), grid, u.node)
              for u in net.converters]
    res = min(float(frames.mfd_residual(z).max()) for z in active)
    out.check("active-PLL-not-MFD", not any(frames.is_mfd(z) for z in active),
              f"min residual {res:.2f}")
    return _finish(out, t0)


def criterion_4() -> Outcome:
    out = Outcome(4, "passive oracle floor, 31-point sweep", budget=120.0)
    t0 = time.perf_counter()
    net = cases.load_case("passive")
    flow, _, _, z_load = nw.analyze(net, GRID31)
    meas = sweep_impedance(build_dynamics(net, flow), SimConfig(), GRID31)
    mag, phase, _ = _worst(z_load, meas.response)
    out.check("mag", mag <= 1e-3, f"{mag:.1e}")
    out.check("phase", phase <= 0.1, f"{phase:.1e}deg")
    return _finish(out, t0)


def criterion_5() -> Outcome:
    out = Outcome(5, "case-study aggregate vs interface sweep, dq and pn", budget=900.0)
    t0 = time.perf_counter()
    _, _, _, z_load, meas, _ = case_sweep()
    for name, a, b in (("dq", z_load, meas.response),
                       ("pn", frames.dq_to_pn(z_load), frames.dq_to_pn(meas.response))):
        mag, phase, _ = _worst(a, b)
        out.check(f"{name}-mag", mag <= 1e-2, f"{mag:.1e}")
        out.check(f"{name}-phase", phase <= 1.0, f"{phase:.1e}deg")
    return _finish(out, t0)


def criterion_6() -> Outcome:
    out = Outcome(6, "negative control: rotation skipped", budget=900.0)
    t0 = time.perf_counter()
    net, flow, models, _, meas, _ = case_sweep()
    raw = nw.aggregate(net, flow, models, rotate=False)
    mag, phase, f = _worst(raw, meas.response)
    out.check("exceeds-1%/1deg", mag > 1e-2 or phase > 1.0,
              f"mag {mag:.2g}, phase {phase:.1f}deg near {f:.3g}Hz")
    return _finish(out, t0)


def _loop_eigs(net):
    _, _, zs, zl = nw.analyze(net, GNC_GRID)
    loop = st.minor_loop_gain(zs, zl)
    return fr.eig2_stack(loop.values), st.gnc_verdict(st.eigenloci(loop))


def criterion_7() -> Outcome:
    out = Outcome(7, "reference-node invariance of eigenvalues and verdict")
    t0 = time.perf_counter()
    net = cases.load_case("case_study")
    base_eigs, base_rep = _loop_eigs(net)
    worst = 0.0
    verdicts = {net.reference_node: base_rep.verdict}
    for ref in ("N3", "N4"):
        eigs, rep = _loop_eigs(net.with_reference(ref))
        verdicts[ref] = rep.verdict
        for a, b in zip(eigs, base_eigs):
            worst = max(worst, float(np.abs(np.sort_complex(a) - np.sort_complex(b)).max()))
    out.check("eig-diff", worst <= 1e-10, f"{worst:.1e}")
    out.check("verdicts", len(set(verdicts.values())) == 1,
              ",".join(f"{k}:{v.value}" for k, v in verdicts.items()))
    return _finish(out, t0)


def criterion_8() -> Outcome:
    out = Outcome(8, "no-load case")
    t0 = time.perf_counter()
    net = cases.load_case("no_load")
    flow = nw.fundamental_flow(net)
    worst = max(abs(flow.theta(n).theta) for n in net.nodes)
    out.check("angles", worst <= 1e-12, f"{worst:.1e}rad")
    models = nw.local_models(net, flow, GRID31)
    same = np.array_equal(nw.aggregate(net, flow, models).values,
                          nw.aggregate(net, flow, models, rotate=False).values)
    out.check("aggregate-bitwise", same)
    return _finish(out, t0)


# PLL bandwidth multipliers scanned for the destabilized variant
PLL_FACTORS = (1.0, 2.0, 4.0, 6.0, 7.0, 8.0, 10.0)


def _gnc_and_time(net):
    flow, _, zs, zl = nw.analyze(net, GNC_GRID)
    rep = st.analyze_stability(zs, zl)
    resp = free_response(build_dynamics(net, flow), t_end=5.0)
    return rep, resp


def criterion_9() -> Outcome:
    out = Outcome(9, "GNC verdict vs 5 s time-domain boundedness")
    t0 = time.perf_counter()
    base = cases.load_case("case_study")
    rep, resp = _gnc_and_time(base)
    out.check("case-study", rep.verdict is st.Verdict.STABLE and resp.bounded(),
              f"{rep.verdict.value}/bounded={resp.bounded()}")
    last_stable = None
    flipped = None
    for a in PLL_FACTORS[1:]:
        rep, resp = _gnc_and_time(cases.destabilized(base, a))
        if rep.verdict is st.Verdict.STABLE:
            last_stable = (a, rep, resp)
            continue
        flipped = (a, rep, resp)
        break
    if last_stable is not None:
        a, rep, resp = last_stable
        out.check(f"x{a:g}", resp.bounded(), f"stable,d={rep.min_distance:.3f}/"
                  f"bounded={resp.bounded()}")
    if flipped is None:
        out.check("flip", False, "verdict never flipped")
    else:
        a, rep, resp = flipped
        out.check(f"x{a:g}", rep.verdict is st.Verdict.UNSTABLE and not resp.bounded(),
                  f"{rep.verdict.value},N={rep.encirclements}/bounded={resp.bounded()}")
    return _finish(out, t0)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{k}" for k in range(1, 10)])
def test_criterion(criterion):
    out = criterion()
    assert out.ok, out.line()


if __name__ == "__main__":
    outcomes = [c() for c in CRITERIA]
    sys.exit(0 if all(o.ok for o in outcomes) else 1)
