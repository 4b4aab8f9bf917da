import math
import warnings

import numpy as np
import pytest

from calderon_lab.fem import BoundaryTrace, ConductivityField, DtnOracle
from calderon_lab.geometry import boundary_frame, build_domain
from calderon_lab.recon import (
    ReconstructionError,
    RecoverySchedule,
    fit_limit,
    recover_normal,
    recover_pipeline,
    recover_value,
)

FAST = RecoverySchedule(h0=0.1, steps=3)
STAR = {"kind": "star", "cos": [1.0, 0.0, 0.0, 0.1], "sin": [0.0, 0.05]}


@pytest.fixture(scope="module")
def disk():
    return build_domain("disk")


# -- extrapolation -----------------------------------------------------------

HS = [0.1, 0.05, 0.025, 0.0125, 0.00625]


@pytest.mark.parametrize("model", ["last", "affine", "scan", 0.5, "quadratic", "hlog"])
def test_fit_constant(model):
    assert fit_limit([(h, 7.0) for h in HS], model).limit == pytest.approx(7.0, abs=1e-12)


def test_fit_affine_exact():
    fit = fit_limit([(h, 3 + 2 * h) for h in HS], "affine")
    assert fit.limit == pytest.approx(3.0, abs=1e-12)
    assert fit.slope == pytest.approx(2.0, abs=1e-10)


def test_fit_scan_picks_exponent():
    fit = fit_limit([(h, 1 + h**0.5) for h in HS], "scan")
    assert fit.exponent == 0.5
    assert fit.limit == pytest.approx(1.0, abs=1e-3)


def test_fit_quadratic_and_tail():
    pts = [(h, 2 - h + 4 * h * h) for h in HS]
    assert fit_limit(pts, "quadratic").limit == pytest.approx(2.0, abs=1e-12)
    assert fit_limit(pts, "quadratic", tail=3).limit == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ValueError):
        fit_limit(pts, "affine", tail=2)


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_limit([(0.1, 1.0), (0.05, 1.0)])
    with pytest.raises(ValueError):
        fit_limit([(0.1, 1.0), (0.1, 1.0), (0.05, 1.0)])
    with pytest.raises(ValueError):
        fit_limit([(h, 1.0) for h in HS], "cubic")
    with pytest.raises(ValueError):
        fit_limit([(h, 1.0) for h in HS], 1.5)


def test_fit_singular_falls_back():
    # nearly coincident abscissae make the design rank deficient
    pts = [(1.0, 5.0), (1.0 + 1e-14, 5.1), (1.0 + 2e-14, 5.2)]
    with pytest.warns(RuntimeWarning):
        fit = fit_limit(pts, "affine")
    assert fit.fallback and fit.limit == 5.0


# -- boundary values ---------------------------------------------------------

def test_value_constant(disk):
    oracle = DtnOracle(ConductivityField.constant(2.0))
    est, rep = recover_value(oracle, disk, 0.0, FAST)
    assert est == pytest.approx(2.0, rel=0.02)
    assert oracle.queries == FAST.steps
    assert list(rep.columns) == ["h", "q0", "c0", "rho"]
    assert rep.abscissae.tolist() == list(FAST.hs)


def test_value_exp_and_scaling(disk):
    gamma = ConductivityField("exp", a=(0.5, 0.2))
    s = 1.0
    est, _ = recover_value(DtnOracle(gamma), disk, s, FAST)
    assert est == pytest.approx(float(gamma(disk.point(s))), rel=0.05)
    est3, _ = recover_value(DtnOracle(gamma.scaled(3.0)), disk, s, FAST)
    # the map is linear in gamma
    assert est3 == pytest.approx(3 * est, rel=1e-8)


def test_value_improves_with_h(disk):
    oracle = DtnOracle(ConductivityField("radial", b=0.5))
    _, rep = recover_value(oracle, disk, 0.0, FAST)
    err = np.abs(rep.values - 1.5)
    assert err[-1] < err[0]


def test_value_frame_choice_under_reflection():
    dom = build_domain(STAR)
    ref = dom.reflected()
    s = 1.3
    x = dom.point(s)
    s_ref = ref.param_of(x * np.array([1.0, -1.0]))
    g = ConductivityField("exp", a=(0.4, 0.3))
    g_ref = ConductivityField("exp", a=(0.4, -0.3))
    sched = RecoverySchedule(h0=0.05, steps=3)
    a, _ = recover_value(DtnOracle(g), dom, s, sched)
    b, _ = recover_value(DtnOracle(g_ref), ref, s_ref, sched)
    assert a == pytest.approx(b, rel=5e-3)
    assert a == pytest.approx(float(g(x)), rel=0.05)


def test_corners_rejected():
    sq = build_domain("square")
    sched = RecoverySchedule(h0=0.05, steps=3)
    oracle = DtnOracle(ConductivityField.constant())
    with pytest.raises(ReconstructionError):
        recover_value(oracle, sq, 1.0, sched)
    with pytest.raises(ReconstructionError):
        recover_value(oracle, sq, 0.1, sched)
    assert oracle.queries == 0


def test_schedule_too_coarse(disk):
    with pytest.raises(ReconstructionError):
        recover_value(DtnOracle(ConductivityField.constant()), disk, 0.0, RecoverySchedule(h0=0.3))
    with pytest.raises(ReconstructionError):
        RecoverySchedule(local_ratio=0.2)


# -- normal derivative -------------------------------------------------------

def test_normal_constant_is_zero(disk):
    gamma = ConductivityField.constant(3.0)
    est, rep = recover_normal(DtnOracle(gamma), disk, 0.5, gamma.boundary_trace(disk), FAST)
    assert abs(est) < 1e-8
    assert list(rep.columns) == ["h", "q1", "c0", "c1", "sigma"]


def test_normal_exp(disk):
    gamma = ConductivityField("exp", a=(0.5, 0.0))
    oracle = DtnOracle(gamma)
    est, _ = recover_normal(oracle, disk, 0.0, gamma.boundary_trace(disk))
    assert est == pytest.approx(0.5, rel=0.05)
    assert oracle.queries == 5


def test_normal_scale_invariant(disk):
    gamma = ConductivityField("exp", a=(0.3, 0.4))
    a, _ = recover_normal(DtnOracle(gamma), disk, 2.0, gamma.boundary_trace(disk), FAST)
    g5 = gamma.scaled(5.0)
    b, _ = recover_normal(DtnOracle(g5), disk, 2.0, g5.boundary_trace(disk), FAST)
    assert a == pytest.approx(b, rel=1e-8)


def test_normal_requires_trace(disk):
    with pytest.raises(TypeError):
        recover_normal(DtnOracle(ConductivityField.constant()), disk, 0.0, lambda s: 1.0, FAST)


def test_pipeline_constant(disk):
    oracle = DtnOracle(ConductivityField.constant(2.0))
    sched = RecoverySchedule(h0=0.1, steps=3, stage_a_tail=None)
    res = recover_pipeline(oracle, disk, [0.0, math.pi], sched, samples=4)
    assert isinstance(res.trace, BoundaryTrace)
    np.testing.assert_allclose(res.values, 2.0, rtol=0.02)
    np.testing.assert_allclose(res.normals, 0.0, atol=0.05)
    # 4 grid points (two coincide with requested ones) in stage A, 2 in stage B
    assert oracle.queries == 3 * 4 + 3 * 2


def test_pipeline_skips_grid_points_near_corners():
    sq = build_domain("square")
    sched = RecoverySchedule(h0=0.05, steps=3, stage_a_tail=None)
    oracle = DtnOracle(ConductivityField.constant())
    res = recover_pipeline(oracle, sq, [0.5], sched, samples=8)
    assert res.values[0] == pytest.approx(1.0, rel=0.02)


def test_value_error_monotone_over_last_steps(disk):
    gamma = ConductivityField("exp", a=(0.5, 0.0))
    s = 0.8
    _, rep = recover_value(DtnOracle(gamma), disk, s)
    err = np.abs(rep.values - float(gamma(disk.point(s))))[-3:]
    inversions = [b / a - 1 for a, b in zip(err, err[1:]) if b > a]
    assert len(inversions) <= 1 and all(r <= 0.1 for r in inversions)
    assert not rep.flags
