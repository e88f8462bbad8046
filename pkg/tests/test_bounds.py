import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cases import ANGLES, NMIN_2D, QUICK, channel, f1_of
from oracles import lemma2_bound_reference
from opdisc.bounds import (
    DistinguishabilityReport,
    build_report,
    lemma2_bound,
    nmin_exact_2d,
    nmin_lower,
    nmin_upper,
    thm4_lower,
    tolerant_ceil,
)
from opdisc.core import PAULI_Z, identity_channel, make_replace_channel, unitary_channel
from opdisc.errors import DomainError, NotDistinguishableError

angles = st.floats(1e-3, math.pi / 2 - 1e-3)


def test_tolerant_ceil_forgives_rounding():
    assert tolerant_ceil(2.0 + 1e-12) == 2
    assert tolerant_ceil(2.0 + 1e-6) == 3
    assert tolerant_ceil(1.5) == 2


@pytest.mark.parametrize("theta, expected", list(zip(ANGLES, NMIN_2D)))
def test_nmin_exact_2d_on_test_angles(theta, expected):
    assert nmin_exact_2d(math.cos(theta)) == expected


def test_nmin_exact_2d_edges():
    assert nmin_exact_2d(0.0) == 1
    assert nmin_exact_2d(math.cos(math.pi / 4)) == 2
    with pytest.raises(NotDistinguishableError):
        nmin_exact_2d(1.0)
    with pytest.raises(DomainError):
        nmin_exact_2d(1.5)


@given(angles)
def test_exact_count_rotates_past_orthogonality(theta):
    n = nmin_exact_2d(math.cos(theta))
    assert n * theta >= math.pi / 2 - 1e-9
    assert (n - 1) * theta < math.pi / 2 + 1e-9


@given(angles)
def test_lower_never_exceeds_exact(theta):
    assert nmin_lower(theta) <= nmin_exact_2d(math.cos(theta))


@given(st.floats(1e-3, math.pi))
def test_lower_is_monotone(theta):
    assert nmin_lower(theta) >= nmin_lower(min(math.pi, theta * 1.5))


def test_lower_domain():
    assert nmin_lower(math.pi) == 1
    with pytest.raises(NotDistinguishableError):
        nmin_lower(0.0)
    with pytest.raises(DomainError):
        nmin_lower(4.0)


@given(angles, st.floats(0.0, 0.999))
def test_upper_dominates_lower_when_geometry_is_consistent(theta, cos_a0):
    # Under the support-orthogonal reading cos(alpha0) = sin(theta), so the
    # upper bound covers the lower one; for arbitrary cos(alpha0) it need not.
    assert nmin_upper(theta, math.sin(theta)) >= nmin_lower(theta)
    assert nmin_upper(theta, cos_a0) >= 1


def test_upper_on_replace_angles():
    assert nmin_upper(math.pi / 4, math.sin(math.pi / 4)) == 2
    assert nmin_upper(math.pi / 3, math.sin(math.pi / 3)) == 2
    assert nmin_upper(0.4, 0.0) == 1
    with pytest.raises(DomainError):
        nmin_upper(math.pi / 2, 0.5)
    with pytest.raises(DomainError):
        nmin_upper(0.5, 1.0)


@given(angles, st.floats(0.05, math.pi / 2 - 0.05), st.floats(0.0, 1.0))
def test_witness_bound_matches_reference(theta, a0, frac):
    alpha = frac * a0
    value = lemma2_bound(theta, a0, alpha)
    assert value == pytest.approx(lemma2_bound_reference(theta, a0, alpha), abs=1e-15)
    assert 0.0 <= value <= math.cos(theta) + 1e-15


def test_witness_bound_endpoints():
    assert lemma2_bound(0.3, 0.7, 0.0) == pytest.approx(math.cos(0.3))
    assert lemma2_bound(0.3, 0.7, 0.7) == 0.0
    with pytest.raises(DomainError):
        lemma2_bound(0.3, 0.7, -0.1)


@given(st.floats(0.0, 1.0), st.floats(0.0, math.pi / 2), st.floats(0.0, math.pi / 2))
def test_pair_bound_properties(q, t0, t1):
    value = thm4_lower(q, t0, t1)
    assert 0.0 <= value <= q + 1e-15
    assert value == thm4_lower(q, t1, t0)
    # one more degree of separation never raises the bound
    assert thm4_lower(q, min(t0 + 0.01, math.pi / 2), t1) <= value + 1e-15


def test_pair_bound_values():
    assert thm4_lower(1.0, 0.0, 0.0) == 1.0
    assert thm4_lower(1.0, math.pi / 6, math.pi / 6) == pytest.approx(0.5)
    assert thm4_lower(math.cos(0.2), 0.1, 0.3) == pytest.approx(math.cos(0.6))
    assert thm4_lower(0.0, 0.1, 0.1) == 0.0
    with pytest.raises(DomainError):
        thm4_lower(1.2, 0.1, 0.1)


# --------------------------------------------------------------------------------------------------
# build_report
# --------------------------------------------------------------------------------------------------


def test_report_for_replace_pi_over_4():
    rep = build_report(make_replace_channel(math.pi / 4), QUICK)
    assert rep.distinguishable
    assert rep.f1 == pytest.approx(math.sqrt(0.5), abs=1e-9)
    assert (rep.nmin_exact_2d, rep.nmin_lower, rep.nmin_upper) == (2, 2, 2)
    assert rep.cos_alpha0 == pytest.approx(math.sqrt(0.5), abs=1e-6)
    assert rep.lower_bound_reachable


def test_report_for_identity_has_no_counts():
    rep = build_report(identity_channel(), QUICK)
    assert not rep.distinguishable
    assert rep.nmin_lower is rep.nmin_upper is rep.nmin_exact_2d is None


def test_report_for_z_takes_single_query_path():
    rep = build_report(unitary_channel(PAULI_Z), QUICK, with_ea=True)
    assert (rep.nmin_exact_2d, rep.nmin_lower, rep.nmin_upper) == (1, 1, 1)
    assert rep.ea_f1 == pytest.approx(0.0, abs=1e-6)
    assert rep.ea_nmin_lower == 1


def test_report_reuses_given_f1_and_round_trips():
    name = "replace:1.2000000000"
    rep = build_report(channel(name), f1=f1_of(name))
    assert rep.f1 == f1_of(name).value
    assert DistinguishabilityReport.from_dict(rep.to_dict()) == rep
    with pytest.raises(ValueError):
        DistinguishabilityReport.from_dict({**rep.to_dict(), "extra": 1})
