import math

import numpy as np
import pytest

from cases import (
    ANGLES,
    CHANNELS,
    NMIN_2D,
    QUBIT_FAMILIES,
    QUICK,
    alpha0_of,
    channel,
    f1_of,
    plan_2d_of,
    plan_general_of,
)
from opdisc.bounds import nmin_exact_2d, nmin_lower, nmin_upper
from opdisc.core import (
    PAULI_Z,
    DensityOperator,
    PureState,
    basis_state,
    depolarizing_channel,
    make_replace_channel,
    qutrit_replace_channel,
    unitary_channel,
)
from opdisc.errors import InfeasibleTransformError, SynthesisError
from opdisc.fidelity import f1_identity
from opdisc.protocol import ProtocolPlan, Round, collinear_input_search, pair_transform, plan_2d, plan_general

ZERO, ONE = PureState([1, 0]), PureState([0, 1])
PLUS, MINUS = PureState([1, 1]), PureState([1, -1])


def dm(state):
    return DensityOperator.from_pure(state)


def all_transforms(plan):
    return [r.pre_transform for r in plan.rounds if r.pre_transform is not None]


# --------------------------------------------------------------------------------------------------
# pair_transform
# --------------------------------------------------------------------------------------------------


def test_identity_like_transform():
    tr = pair_transform(dm(ZERO), PLUS, ZERO, PLUS)
    assert tr.check().ok
    assert len(tr.kraus) == 1


def test_orthogonal_pairs_use_one_unitary():
    tr = pair_transform(dm(ZERO), ONE, PLUS, MINUS)
    assert len(tr.kraus) == 1
    k = tr.kraus[0]
    np.testing.assert_allclose(k.conj().T @ k, np.eye(2), atol=1e-12)
    assert tr.check().ok


def test_mixed_source_with_equal_targets_is_constant_map():
    tr = pair_transform(DensityOperator.maximally_mixed(2), ZERO, ZERO, ZERO)
    assert len(tr.kraus) == 2
    out = tr.apply(np.diag([0.3, 0.7]).astype(complex))
    np.testing.assert_allclose(out, np.diag([1, 0]), atol=1e-12)


def test_equal_rays_with_rounded_overlap_are_accepted():
    ta = PureState([0.28, 0.96j])
    tb = PureState(np.exp(0.7j) * ta.amplitudes)
    assert abs(np.vdot(ta.amplitudes, tb.amplitudes)) != 1.0  # rounding, about 1e-16 below
    tr = pair_transform(DensityOperator.maximally_mixed(2), PLUS, ta, tb)
    assert tr.check().ok


def test_mixed_source_with_distinct_targets_is_rejected():
    with pytest.raises(InfeasibleTransformError):
        pair_transform(DensityOperator.maximally_mixed(2), ZERO, ZERO, PLUS)


def test_two_kraus_construction():
    target_b = PureState([math.cos(math.pi / 6), math.sin(math.pi / 6)])
    tr = pair_transform(dm(ZERO), PLUS, ZERO, target_b)
    assert len(tr.kraus) == 2
    chk = tr.check()
    assert chk.completeness_residual <= 1e-9
    assert chk.choi_min_eigenvalue >= -1e-9
    assert max(chk.action_error_a, chk.action_error_b) <= 1e-9


def test_transform_needs_target_overlap_at_least_source_fidelity():
    # |<0|+>| = 0.707 cannot shrink to an orthogonal pair
    with pytest.raises(InfeasibleTransformError):
        pair_transform(dm(ZERO), PLUS, ZERO, ONE)


def test_transform_rejects_dimension_mismatch():
    with pytest.raises(InfeasibleTransformError):
        pair_transform(dm(ZERO), PureState([1, 0, 0]), ZERO, ZERO)


def test_transform_from_rank_two_qutrit_source():
    rng = np.random.default_rng(1)
    rho = DensityOperator(np.diag([0.6, 0.4, 0.0]).astype(complex))
    b = PureState([0.3, 0.2, 1.0])
    fid = float(np.linalg.norm(b.amplitudes[:2]))
    # pick targets whose overlap just exceeds the source fidelity
    ta = PureState(rng.normal(size=3) + 1j * rng.normal(size=3))
    perp = rng.normal(size=3) + 1j * rng.normal(size=3)
    perp -= np.vdot(ta.amplitudes, perp) * ta.amplitudes
    perp /= np.linalg.norm(perp)
    ov = min(1.0, fid + 0.05)
    tb = PureState(ov * ta.amplitudes + math.sqrt(1 - ov**2) * perp)
    assert pair_transform(rho, b, ta, tb).check().ok


# --------------------------------------------------------------------------------------------------
# collinear_input_search
# --------------------------------------------------------------------------------------------------


def test_collinear_search_on_replace():
    b, c, ov = collinear_input_search(make_replace_channel(math.pi / 4), QUICK)
    assert abs(np.vdot(b.amplitudes, [1, 0])) == pytest.approx(1.0, abs=1e-6)
    assert abs(np.vdot(c.amplitudes, [1, 1]) / math.sqrt(2)) == pytest.approx(1.0, abs=1e-6)
    assert ov == pytest.approx(math.cos(math.pi / 4), abs=1e-6)


def test_collinear_search_on_unitary():
    u = unitary_channel(PAULI_Z)
    b, c, ov = collinear_input_search(u, QUICK)
    assert ov == pytest.approx(abs(np.vdot(b.amplitudes, PAULI_Z @ b.amplitudes)), abs=1e-9)


def test_collinear_search_on_depolarizing_finds_nothing():
    assert collinear_input_search(depolarizing_channel(0.5), QUICK) is None


# --------------------------------------------------------------------------------------------------
# plan_2d
# --------------------------------------------------------------------------------------------------


@pytest.mark.parametrize("name", QUBIT_FAMILIES)
def test_plan_2d_is_optimal(name):
    plan = plan_2d_of(name)
    assert plan.claimed_queries == len(plan.rounds) == nmin_exact_2d(f1_of(name).value)
    assert plan.terminal_leak() <= 1e-9
    assert all(tr.check().ok for tr in all_transforms(plan))


def test_plan_2d_expected_counts():
    counts = [plan_2d_of(f"replace:{t:.10f}").claimed_queries for t in ANGLES]
    assert tuple(counts) == NMIN_2D


@pytest.mark.parametrize("name", ["replace:0.4000000000", "rotation:0.5235987756"])
def test_plan_2d_overlaps_follow_cosine(name):
    plan = plan_2d_of(name)
    theta = f1_of(name).theta
    for k, q in enumerate(plan.overlap_schedule(), start=1):
        if k * theta < math.pi / 2:
            assert q == pytest.approx(math.cos(k * theta), abs=1e-9)
    assert plan.overlap_schedule()[-1] <= 1e-9


def test_plan_2d_for_replace_pi_over_6():
    plan = plan_2d_of("replace:0.5235987756")
    np.testing.assert_allclose(plan.overlap_schedule(), [math.cos(math.pi / 6), 0.5, 0.0], atol=1e-9)


def test_plan_2d_for_z_is_single_query():
    plan = plan_2d_of("Z")
    assert plan.claimed_queries == 1
    b = plan.rounds[0].input_if_E.amplitudes
    assert abs(np.vdot(plan.final_measurement_vector.amplitudes, PAULI_Z @ b)) <= 1e-9


def test_plan_2d_requires_a_qubit():
    ch = qutrit_replace_channel(0.4, 1.0)
    with pytest.raises(SynthesisError):
        plan_2d(ch, f1_of("qutrit_replace:0.4:1"))


# --------------------------------------------------------------------------------------------------
# plan_general
# --------------------------------------------------------------------------------------------------


@pytest.mark.parametrize("name", list(CHANNELS))
def test_plan_general_respects_bounds(name):
    plan = plan_general_of(name)
    f1 = f1_of(name)
    if f1.value <= 1e-9:
        assert plan.claimed_queries == 1
        return
    lower = nmin_lower(f1.theta)
    upper = nmin_upper(f1.theta, alpha0_of(name).cos_alpha0)
    assert lower <= plan.claimed_queries <= upper
    assert plan.terminal_leak() <= 1e-9
    assert all(tr.check().ok for tr in all_transforms(plan))
    schedule = plan.overlap_schedule()
    assert all(b < a for a, b in zip(schedule, schedule[1:]))


def test_plan_general_for_replace_pi_over_4():
    plan = plan_general_of("replace:0.7853981634")
    assert plan.claimed_queries == 2


def test_plan_general_for_replace_pi_over_6():
    assert plan_general_of("replace:0.5235987756").claimed_queries <= 6


def test_plan_general_needs_alpha0():
    name = "replace:0.4000000000"
    with pytest.raises(SynthesisError):
        plan_general(channel(name), f1_of(name), None)


def test_plan_general_refuses_indistinguishable():
    f1 = f1_identity(depolarizing_channel(0.5), QUICK)
    with pytest.raises(SynthesisError):
        plan_general(depolarizing_channel(0.5), f1, None)


# --------------------------------------------------------------------------------------------------
# ProtocolPlan invariants
# --------------------------------------------------------------------------------------------------


def test_plan_rejects_miscounted_queries():
    zero = basis_state(2, 0)
    rnd = Round(1, None, zero, zero, 0.0)
    with pytest.raises(SynthesisError):
        ProtocolPlan(unitary_channel(PAULI_Z), (rnd,), zero, 2)
    with pytest.raises(SynthesisError):
        ProtocolPlan(unitary_channel(PAULI_Z), (), zero, 0)
