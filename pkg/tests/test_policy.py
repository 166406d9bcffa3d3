import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from irlgen.numerics import AdamState, RngStream, adam_step, finite_diff_grad, scale_store
from irlgen.policy import (BOS, EOS, GenDims, LstmState, Trajectory, batch_log_prob, entropy_estimate,
                           forward_step, init_generator, initial_state, log_prob, mle_loss_and_grad,
                           sample_batch, sample_trajectory, zero_generator)

from oracles import all_sequences, exact_entropy, policy_step_logps, random_generator, rel_close

MODES = ("fixed-length", "eos-terminated")


def test_zero_params_uniform_logits():
    gp = zero_generator(GenDims(6, 3, 4))
    state, logits = forward_step(gp, initial_state(gp), 3)
    assert np.all(logits == logits[0])


def test_forward_step_deterministic_and_range_checked():
    gp = random_generator(5, 2, 3, seed=1)
    s = LstmState(np.full(3, 0.1), np.full(3, -0.2))
    a, b = forward_step(gp, s, 2), forward_step(gp, s, 2)
    np.testing.assert_array_equal(a[1], b[1])
    np.testing.assert_array_equal(a[0].hidden, b[0].hidden)
    with pytest.raises(ValueError):
        forward_step(gp, s, 5)


def test_scalar_lstm_hand_set():
    # D_emb = D_hid = 1, V = 2... plus reserved ids; all weights and biases 1.
    # Values frozen from a scalar re-derivation of the gate equations.
    gp = zero_generator(GenDims(3, 1, 1))
    arrays = {k: np.ones_like(v) for k, v in gp.arrays.items()}
    gp = gp.replace(arrays)
    s, logits = forward_step(gp, initial_state(gp), BOS)
    assert abs(s.hidden[0] - 0.6082834181835157) < 1e-14
    assert abs(s.cell[0] - 0.8491126756208685) < 1e-14
    np.testing.assert_allclose(logits, 1.0 + 0.6082834181835157, atol=1e-14)
    s, _ = forward_step(gp, s, 2)
    assert abs(s.hidden[0] - 0.8726373576091948) < 1e-14
    assert abs(s.cell[0] - 1.7121974195901233) < 1e-14


def test_sample_zero_params_two_content_tokens():
    gp = zero_generator(GenDims(4, 3, 3))
    traj = sample_trajectory(gp, 5, "fixed-length", RngStream(0))
    assert traj.length == 5
    assert all(t in (2, 3) for t in traj.tokens)
    np.testing.assert_allclose(traj.step_logps, math.log(0.5), atol=1e-15)


@pytest.mark.parametrize("mode", MODES)
def test_sampling_deterministic(mode):
    gp = random_generator(6, 3, 3, seed=2)
    a = sample_trajectory(gp, 7, mode, RngStream(5, ("s",)))
    b = sample_trajectory(gp, 7, mode, RngStream(5, ("s",)))
    assert a.tokens == b.tokens
    np.testing.assert_array_equal(a.step_logps, b.step_logps)


def test_sample_batch_is_per_index():
    gp = random_generator(6, 3, 3, seed=2)
    big = sample_batch(gp, 10, 6, "eos-terminated", RngStream(1))
    small = sample_batch(gp, 4, 6, "eos-terminated", RngStream(1))
    assert [t.tokens for t in big[:4]] == [t.tokens for t in small]


def test_empirical_frequencies_hand_set():
    # one step over two content tokens with probabilities [0.1, 0.9]
    gp = zero_generator(GenDims(4, 1, 1))
    arrays = dict(gp.arrays)
    arrays["out_b"] = np.array([[0.0, 0.0, 0.0, math.log(9.0)]])
    gp = gp.replace(arrays)
    trajs = sample_batch(gp, 100_000, 1, "fixed-length", RngStream(3))
    freq = np.mean([t.tokens[0] == 3 for t in trajs])
    assert abs(freq - 0.9) < 0.01


def test_fixed_length_never_emits_reserved():
    gp = random_generator(5, 2, 2, seed=4, scale=3.0)
    arrays = dict(gp.arrays)
    arrays["out_b"] = arrays["out_b"] + np.array([[50.0, 50.0, 0, 0, 0]])
    gp = gp.replace(arrays)
    for t in sample_batch(gp, 200, 6, "fixed-length", RngStream(0)):
        assert t.length == 6 and min(t.tokens) >= 2


def test_eos_terminated_stops_at_eos():
    gp = random_generator(5, 2, 2, seed=4, scale=2.0)
    arrays = dict(gp.arrays)
    arrays["out_b"] = arrays["out_b"] + np.array([[0.0, 3.0, 0, 0, 0]])
    gp = gp.replace(arrays)
    trajs = sample_batch(gp, 300, 8, "eos-terminated", RngStream(0))
    for t in trajs:
        assert 1 <= t.length <= 8
        assert BOS not in t.tokens
        assert EOS not in t.tokens[:-1]
    assert any(t.tokens[-1] == EOS for t in trajs)


@pytest.mark.parametrize("mode", MODES)
def test_log_prob_matches_sampled_step_logps(mode):
    gp = random_generator(6, 3, 4, seed=9)
    for t in sample_batch(gp, 20, 6, mode, RngStream(2)):
        total, per = log_prob(gp, t.tokens, mode)
        np.testing.assert_allclose(per, t.step_logps, atol=1e-12, rtol=0)
        assert total == pytest.approx(sum(per), abs=1e-12)
        assert np.all(t.step_logps <= 0)


@pytest.mark.parametrize("mode", MODES)
def test_log_prob_matches_scalar_oracle(mode):
    gp = random_generator(5, 2, 3, seed=11)
    seq = [2, 4, 3, 3] if mode == "fixed-length" else [2, 4, 3, 1]
    _, per = log_prob(gp, seq, mode)
    np.testing.assert_allclose(per, policy_step_logps(gp, seq, mode), atol=1e-12, rtol=0)


def test_log_prob_zero_params():
    gp = zero_generator(GenDims(4, 2, 2))
    total, _ = log_prob(gp, [2, 3, 2], "fixed-length")
    assert total == pytest.approx(3 * math.log(0.5), abs=1e-14)


def test_log_prob_invalid_tokens():
    gp = zero_generator(GenDims(4, 2, 2))
    for bad in ([2, EOS], [BOS], [4]):
        with pytest.raises(ValueError):
            log_prob(gp, bad, "fixed-length")
    with pytest.raises(ValueError):
        log_prob(gp, [EOS, 2], "eos-terminated")


@pytest.mark.parametrize("seed", range(4))
def test_normalization_by_enumeration(seed):
    gp = random_generator(5, 3, 3, seed=seed, scale=1.5)
    seqs = all_sequences(3, 3)
    assert math.fsum(np.exp(batch_log_prob(gp, seqs, "fixed-length"))) == pytest.approx(1.0, abs=1e-10)


def test_normalization_eos_terminated():
    # all sequences of length <= 3 that end in EOS, plus the length-3 non-EOS ones
    gp = random_generator(4, 2, 2, seed=3, scale=1.5)
    seqs = []
    for L in range(1, 4):
        for body in all_sequences(2, L - 1):
            seqs.append(body + [EOS])
    seqs += all_sequences(2, 3)
    total = math.fsum(math.exp(log_prob(gp, s, "eos-terminated")[0]) for s in seqs)
    assert total == pytest.approx(1.0, abs=1e-10)


def test_mle_zero_params_loss():
    gp = zero_generator(GenDims(4, 2, 2))
    loss, _ = mle_loss_and_grad(gp, [[2, 3, 3], [3, 2]], "fixed-length")
    assert loss == pytest.approx(math.log(2), abs=1e-14)


@pytest.mark.parametrize("mode", MODES)
def test_mle_gradient_finite_difference(mode):
    gp = random_generator(5, 3, 3, seed=21, scale=0.7)
    batch = [[2, 4, 3, 2], [3, 3, 4]] if mode == "fixed-length" else [[2, 4, 3, 1], [3, 1]]
    _, grads = mle_loss_and_grad(gp, batch, mode)
    fd = finite_diff_grad(lambda a: mle_loss_and_grad(gp.replace(a), batch, mode)[0], gp.arrays, 1e-5)
    assert rel_close(grads, fd) <= 1.0


def test_mle_empty_batch():
    with pytest.raises(ValueError):
        mle_loss_and_grad(zero_generator(GenDims(4, 2, 2)), [], "fixed-length")


def test_mle_overfits_single_sequence():
    gp = init_generator(GenDims(7, 8, 8), RngStream(0))
    seq = [2, 5, 3, 6, 4]
    state = AdamState.zeros(gp.arrays)
    arrays = gp.arrays
    for _ in range(200):
        _, g = mle_loss_and_grad(gp.replace(arrays), [seq], "fixed-length")
        arrays, state = adam_step(arrays, scale_store(g, -1.0), state, 0.05)
    loss, _ = mle_loss_and_grad(gp.replace(arrays), [seq], "fixed-length")
    assert loss < 0.05


def test_entropy_zero_params():
    gp = zero_generator(GenDims(4, 2, 2))
    # every sequence has probability 2^-T, so the estimate is exact
    assert entropy_estimate(gp, 50, 6, "fixed-length", RngStream(0)) == pytest.approx(6 * math.log(2))


def test_entropy_deterministic_policy():
    gp = zero_generator(GenDims(5, 2, 2))
    arrays = dict(gp.arrays)
    arrays["out_b"] = np.array([[0.0, 0.0, 1e9, 0.0, 0.0]])
    assert entropy_estimate(gp.replace(arrays), 100, 4, "fixed-length", RngStream(0)) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_entropy_matches_enumeration(seed):
    gp = random_generator(5, 3, 3, seed=seed, scale=1.2)
    exact = exact_entropy(gp, 3, 3)
    trajs = sample_batch(gp, 20000, 3, "fixed-length", RngStream(seed, ("ent",)))
    neg = np.array([-t.total_logp for t in trajs])
    est = entropy_estimate(gp, 20000, 3, "fixed-length", RngStream(seed, ("ent",)))
    assert est == pytest.approx(neg.mean())
    assert abs(est - exact) < 3 * neg.std() / math.sqrt(len(neg))


@given(st.integers(0, 10_000), st.sampled_from(MODES))
def test_sampling_scoring_consistency(seed, mode):
    gp = random_generator(5, 2, 2, seed=seed % 50, scale=1.0)
    t = sample_trajectory(gp, 5, mode, RngStream(seed))
    assert isinstance(t, Trajectory)
    np.testing.assert_allclose(log_prob(gp, t.tokens, mode)[1], t.step_logps, atol=1e-12, rtol=0)


def test_init_generator_ranges():
    gp = init_generator(GenDims(10, 4, 5), RngStream(0))
    assert np.all(np.abs(gp.arrays["embed"]) <= 0.08)
    np.testing.assert_array_equal(gp.arrays["b_f"], 1.0)
    np.testing.assert_array_equal(gp.arrays["b_i"], 0.0)
