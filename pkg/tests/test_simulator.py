import math

import numpy as np
import pytest

from cases import alpha0_of, channel, f1_of, plan_2d_of, plan_general_of
from opdisc.core import identity_channel, make_replace_channel, make_rotation_channel
from opdisc.errors import DomainError
from opdisc.simulator import (
    Hypothesis,
    batched_pair_fidelity,
    monte_carlo,
    run_once,
    sample_pairs,
    verify_lemma2,
    verify_thm4,
)
from oracles import output_fidelity

PI6 = "replace:0.5235987756"
PI4 = "replace:0.7853981634"
PI3 = "replace:1.0471975512"


# --------------------------------------------------------------------------------------------------
# run_once
# --------------------------------------------------------------------------------------------------


def test_z_plan_identity_branch_is_exact():
    assert run_once(plan_2d_of("Z"), Hypothesis.IDENTITY).terminal_error_probability == pytest.approx(0.0, abs=1e-15)


def test_replace_pi_over_4_channel_branch():
    rec = run_once(plan_2d_of(PI4), "Channel")
    assert rec.hypothesis is Hypothesis.CHANNEL
    assert rec.terminal_error_probability <= 1e-9


def test_replace_pi_over_6_round_overlaps():
    rec = run_once(plan_2d_of(PI6), Hypothesis.IDENTITY)
    np.testing.assert_allclose(rec.round_overlaps, [math.cos(math.pi / 6), math.cos(math.pi / 3), 0.0], atol=1e-7)


@pytest.mark.parametrize("name", [PI6, "rotation:0.4000000000", "qutrit_replace:pi/6:0.5"])
@pytest.mark.parametrize("hypothesis", list(Hypothesis))
def test_terminal_error_vanishes(name, hypothesis):
    plan = plan_general_of(name)
    assert run_once(plan, hypothesis).terminal_error_probability <= 1e-9


# --------------------------------------------------------------------------------------------------
# monte_carlo
# --------------------------------------------------------------------------------------------------


def test_monte_carlo_z():
    rep = monte_carlo(plan_2d_of("Z"), 10_000, seed=42)
    assert rep.empirical_error == 0.0
    assert rep.seed == 42


def test_monte_carlo_replace_pi_over_4():
    rep = monte_carlo(plan_2d_of(PI4), 10_000)
    assert rep.wrong_guesses == 0
    assert rep.max_terminal_leak <= 1e-9


def test_single_shot_bookkeeping():
    rep = monte_carlo(plan_2d_of(PI4), 1, seed=3)
    assert rep.shots == 1
    assert rep.empirical_error in (0.0, 1.0)
    assert rep.empirical_error == rep.wrong_guesses / rep.shots


def test_monte_carlo_is_reproducible():
    plan = plan_general_of(PI6)
    assert monte_carlo(plan, 500, seed=9).to_dict() == monte_carlo(plan, 500, seed=9).to_dict()


def test_monte_carlo_rejects_zero_shots():
    with pytest.raises(DomainError):
        monte_carlo(plan_2d_of(PI4), 0)


# --------------------------------------------------------------------------------------------------
# Pair sampling
# --------------------------------------------------------------------------------------------------


@pytest.mark.parametrize("q", [0.0, 0.3, 1.0])
def test_sampled_pairs_have_requested_overlap(q):
    psi0, psi1 = sample_pairs(3, q, 200, np.random.default_rng(0))
    np.testing.assert_allclose(np.linalg.norm(psi0, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(psi1, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.abs(np.einsum("ni,ni->n", psi0.conj(), psi1)), q, atol=1e-12)


def test_batched_fidelity_against_identity_matches_oracle():
    ch = make_replace_channel(0.4)
    psi, _ = sample_pairs(2, 1.0, 300, np.random.default_rng(1))
    got = batched_pair_fidelity(ch.stack, psi, identity_channel().stack, psi)
    want = [output_fidelity(ch.stack, p) for p in psi]
    np.testing.assert_allclose(got, want, atol=1e-8)


# --------------------------------------------------------------------------------------------------
# Pair-bound verification
# --------------------------------------------------------------------------------------------------


def test_pair_bound_identity_pair():
    rep = verify_thm4(identity_channel(), identity_channel(), 0.0, 0.0, [0.5])
    assert rep.rows[0].min_sampled >= 0.5 - 1e-6
    assert rep.violations == 0


def test_pair_bound_rotation_pair():
    r = make_rotation_channel(math.pi / 12)
    rep = verify_thm4(r, r, math.pi / 12, math.pi / 12, [math.cos(math.pi / 6)], samples_per_q=500)
    assert rep.rows[0].bound == pytest.approx(0.5)
    assert rep.violations == 0


def test_pair_bound_bound_is_tight_at_the_minimizer():
    ch = make_replace_channel(math.pi / 6)
    b = f1_of(PI6).witness_input.amplitudes
    rep = verify_thm4(ch, identity_channel(), math.pi / 6, 0.0, [1.0], probes=[(b, b)])
    assert rep.rows[0].bound == pytest.approx(math.cos(math.pi / 6))
    assert rep.rows[0].min_sampled == pytest.approx(math.cos(math.pi / 6), abs=1e-4)
    assert not rep.rows[0].violated


def test_pair_bound_flags_a_wrong_angle():
    # claiming the replace channel is almost the identity overstates the bound
    ch = make_replace_channel(1.2)
    rep = verify_thm4(ch, identity_channel(), 0.01, 0.0, [1.0], probes=[(np.array([1, 0]), np.array([1, 0]))])
    assert rep.violations == 1


def test_pair_bound_csv_and_determinism():
    r = make_rotation_channel(0.3)
    one = verify_thm4(r, identity_channel(), 0.3, 0.0, [0.0, 0.5, 1.0], 50, seed=4)
    two = verify_thm4(r, identity_channel(), 0.3, 0.0, [0.0, 0.5, 1.0], 50, seed=4)
    assert one.to_csv() == two.to_csv()
    lines = one.to_csv().splitlines()
    assert lines[0] == "q,bound,min_sampled,violated"
    assert len(lines) == 4


def test_pair_bound_rejects_bad_overlap():
    with pytest.raises(DomainError):
        verify_thm4(identity_channel(), identity_channel(), 0.0, 0.0, [1.5])


# --------------------------------------------------------------------------------------------------
# Witness-bound verification
# --------------------------------------------------------------------------------------------------


def test_witness_bound_quarter_grid():
    grid = [0, math.pi / 16, math.pi / 8, 3 * math.pi / 16, math.pi / 4]
    rep = verify_lemma2(channel(PI4), f1_of(PI4), alpha0_of(PI4), grid)
    assert rep.violations == 0
    assert rep.rows[-1].min_sampled == pytest.approx(0.0, abs=1e-9)
    assert rep.to_csv().splitlines()[0] == "alpha,bound,witness_fidelity,violated"


def test_witness_bound_hand_value():
    rep = verify_lemma2(channel(PI3), f1_of(PI3), alpha0_of(PI3), [math.pi / 12])
    assert rep.rows[0].bound == pytest.approx(math.sin(math.pi / 12), abs=1e-9)
    assert not rep.rows[0].violated
