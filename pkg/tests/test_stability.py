import numpy as np
import pytest

from zshift import cases, frames, freqresp as fr, network as nw, stability as st
from zshift.errors import FrameError

GNC_GRID = fr.make_log_grid(0.1, 1e4, 1000)


def loop_from_eigs(l1, l2, grid, t=None):
    """Loop gain with prescribed eigenvalues, optionally mixed by a fixed similarity."""
    vals = np.zeros((len(grid), 2, 2), dtype=complex)
    vals[:, 0, 0] = l1
    vals[:, 1, 1] = l2
    if t is not None:
        vals = t @ vals @ np.linalg.inv(t)
    return fr.FrequencyResponse2x2(grid, vals, kind=fr.Kind.LOOP_GAIN)


def verdict_of(l1, l2, rhp=0, n=None):
    grid = fr.make_log_grid(1, 100, n or len(l1))
    return st.gnc_verdict(st.eigenloci(loop_from_eigs(l1, l2, grid)), rhp)


def test_zero_source_gives_zero_loop(case_analysis):
    _, _, zs, zl = case_analysis
    loop = st.minor_loop_gain(zs.scaled(0.0), zl)
    assert np.array_equal(loop.values, np.zeros_like(loop.values))
    rep = st.gnc_verdict(st.eigenloci(loop))
    assert rep.verdict is st.Verdict.STABLE and rep.encirclements == 0


def test_equal_impedances_give_identity(case_analysis):
    _, _, _, zl = case_analysis
    assert np.allclose(st.minor_loop_gain(zl, zl).values, np.eye(2), atol=1e-12)


def test_local_frame_rejected(case_analysis):
    _, models, zs, _ = case_analysis
    with pytest.raises(FrameError, match="global"):
        st.minor_loop_gain(zs, models["C1"])
    with pytest.raises(FrameError):
        st.minor_loop_gain(fr.invert(zs), zs)


def test_similarity_invariance(case_analysis, rng):
    _, _, zs, zl = case_analysis
    t = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    a = st.eigenloci(st.minor_loop_gain(zs, zl)).values
    b = st.eigenloci(st.minor_loop_gain(frames.similarity(zs, t),
                                        frames.similarity(zl, t))).values
    for pa, pb in zip(a, b):
        assert np.allclose(np.sort_complex(pa), np.sort_complex(pb), rtol=1e-10, atol=1e-12)


def test_constant_diagonal_loci():
    g = fr.make_log_grid(1, 10, 6)
    loci = st.eigenloci(loop_from_eigs(np.full(6, 0.3), np.full(6, -0.2j), g)).values
    assert np.allclose(loci[:, 0], 0.3) and np.allclose(loci[:, 1], -0.2j)


def test_crossing_loci_stay_continuous(rng):
    n = 101
    x = np.linspace(-1, 1, n)
    l1 = x + 0.5j
    l2 = -x - 0.4j
    g = fr.make_log_grid(1, 100, n)
    t = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    loci = st.eigenloci(loop_from_eigs(l1, l2, g, t)).values
    # untracked sorting by real part would jump by ~1 at the crossing
    assert np.abs(np.diff(loci, axis=0)).max() < 0.05
    first = l1 if abs(loci[0, 0] - l1[0]) < abs(loci[0, 0] - l2[0]) else l2
    assert np.allclose(loci[:, 0], first, atol=1e-10)


def test_loci_inside_unit_disk_are_stable():
    phi = np.linspace(0, 6 * np.pi, 400)
    rep = verdict_of(0.9 * np.exp(1j * phi) * 0.5, 0.3 * np.exp(-1j * phi))
    assert rep.verdict is st.Verdict.STABLE and rep.encirclements == 0


@pytest.mark.parametrize("direction, count", [(1, 1), (-1, -1)])
def test_single_encirclement(direction, count):
    phi = np.linspace(0, direction * np.pi, 200)
    locus = -1 + 0.5 * np.exp(1j * phi)
    rep = verdict_of(locus, np.zeros(200))
    assert rep.encirclements == count
    assert rep.verdict is st.Verdict.UNSTABLE
    assert rep.min_distance == pytest.approx(0.5)
    if count == 1:
        assert verdict_of(locus, np.zeros(200), rhp=1).verdict is st.Verdict.STABLE


def test_undersampled_locus_is_inconclusive():
    phi = np.array([0.0, 0.7, 1.4, 2.1, 2.8, np.pi]) * 1.0
    locus = -1 + 0.5 * np.exp(1j * phi * 3)  # steps of 2.1 rad around -1
    rep = verdict_of(locus, np.zeros(6))
    assert rep.verdict is st.Verdict.INCONCLUSIVE
    assert any("coarse" in n for n in rep.notes)


def test_swapping_subsystems_inverts_loop(case_analysis):
    _, _, zs, zl = case_analysis
    a = st.minor_loop_gain(zs, zl).values
    b = st.minor_loop_gain(zl, zs).values
    assert np.allclose(fr.det2(a) * fr.det2(b), 1.0, rtol=1e-12)


@pytest.mark.parametrize("factor, expected", [(1.0, st.Verdict.STABLE),
                                              (10.0, st.Verdict.UNSTABLE)])
def test_grid_refinement_keeps_verdict(factor, expected):
    net = cases.destabilized(cases.load_case(), factor)
    verdicts = []
    for n in (500, 1000, 2000):
        _, _, zs, zl = nw.analyze(net, fr.make_log_grid(0.1, 1e4, n))
        verdicts.append(st.analyze_stability(zs, zl).verdict)
    assert verdicts == [expected] * 3


def test_report_and_csv_formats(case_net):
    _, _, zs, zl = nw.analyze(case_net, GNC_GRID)
    rep = st.analyze_stability(zs, zl)
    fields = dict(line.split(": ", 1) for line in rep.to_text().splitlines())
    assert fields["verdict"] == "stable"
    assert fields["convention"] == st.LOOP_GAIN_CONVENTION
    assert fields["rhp_poles_open_loop"] == "0"
    assert float(fields["min_distance_to_minus_one"]) == rep.min_distance
    csv = st.nyquist_csv(rep).splitlines()
    assert csv[0] == "freq_hz,re_l1,im_l1,re_l2,im_l2"
    assert len(csv) == len(GNC_GRID) + 1
