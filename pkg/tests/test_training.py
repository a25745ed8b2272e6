from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mnntraj import (
    ConfigurationError,
    DataError,
    DifferentialTrajectory,
    LearningConfig,
    NetworkParameters,
    NumericError,
    Topology,
    apply_gradients,
    compute_gradients,
    evaluate_sequence_error,
    forward_step,
    init_parameters,
    reference_gradients,
    reset_state,
    step_error,
    train_dataset,
    train_on_sequence,
)
from mnntraj.training import StepGradients, training_pairs

from conftest import (
    assert_gradient_matches_fd,
    finite_difference_gradient,
    make_random_params,
    make_random_state,
)

TOPO = Topology()


def random_step(rng, params=None, state=None, x=None, target=None):
    """One forward step on random data; returns (trace, target)."""
    p = params if params is not None else make_random_params(rng)
    s = state if state is not None else make_random_state(rng)
    x = x if x is not None else rng.uniform(-2.0, 2.0, p.topology.n_inputs)
    d = target if target is not None else rng.uniform(-2.0, 2.0, p.topology.n_outputs)
    _, trace, _ = forward_step(p, s, x)
    return trace, d


def diff_seq(deltas, vid="veh", rate=20.0):
    deltas = np.asarray(deltas, dtype=float)
    return DifferentialTrajectory(vid, rate, deltas, np.zeros(2))


# --- step_error --------------------------------------------------------------


def test_step_error_examples():
    assert step_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert step_error(np.array([1.0, 0.0]), np.array([0.0, 0.0])) == 1.0
    assert step_error(np.array([0.3, -0.4]), np.array([0.0, 0.0])) == pytest.approx(0.25, abs=1e-15)


def test_step_error_rejects_bad_operands():
    with pytest.raises(ConfigurationError):
        step_error(np.zeros(2), np.zeros(3))
    with pytest.raises(NumericError):
        step_error(np.array([np.inf, 0.0]), np.zeros(2))


# --- compute_gradients -------------------------------------------------------


def test_gradients_vanish_when_output_equals_target(rng):
    p, s = make_random_params(rng), make_random_state(rng)
    out, trace, _ = forward_step(p, s, rng.normal(size=2))
    g = compute_gradients(trace, out)
    for f in StepGradients.ARRAY_FIELDS:
        assert np.all(getattr(g, f) == 0.0)


def test_alpha_gradients_vanish_when_memory_already_tracks_activation(rng):
    p = make_random_params(rng)
    s = make_random_state(rng)
    s.v_input[:] = s.n_input_prev
    s.v_hidden[:] = s.n_hidden_prev
    s.v_output[:] = s.n_output_prev
    trace, d = random_step(rng, params=p, state=s)
    g = compute_gradients(trace, d)
    assert np.all(g.d_alpha_input == 0.0)
    assert np.all(g.d_alpha_hidden == 0.0)
    assert np.all(g.d_alpha_output == 0.0)


def test_beta_gradient_vanishes_with_zero_output_memory(rng):
    p = make_random_params(rng)
    s = make_random_state(rng)
    p.alpha_output[:] = 0.0
    s.v_output[:] = 0.0  # stays zero through the memory update
    trace, d = random_step(rng, params=p, state=s)
    assert np.all(trace.v_output == 0.0)
    g = compute_gradients(trace, d)
    assert np.all(g.d_beta_output == 0.0)


def test_hidden_output_weight_gradient_scalar_case():
    # error 0.5 at the output, hidden activation 0.2 -> gradient 0.1
    t = Topology(1, 1, 1)
    p = init_parameters(t, seed=0, weight_scale=0.0)
    s = reset_state(t)
    # place the hidden activation at 0.2 via the input weight: tanh(m)=0.2
    p.w_input_hidden[0, 0] = 1.0
    x = np.arctanh(0.2)
    out, trace, _ = forward_step(p, s, np.array([x]))
    target = out - 0.5  # makes e_output exactly +0.5
    g = compute_gradients(trace, target)
    assert trace.out_hidden[0] == pytest.approx(0.2, abs=1e-15)
    assert g.e_output[0] == pytest.approx(0.5, abs=1e-15)
    assert g.d_w_hidden_output[0, 0] == pytest.approx(0.1, abs=1e-12)


def test_gradients_match_scalar_reference_on_random_instances(rng):
    for _ in range(200):
        p = make_random_params(rng)
        trace, d = random_step(rng, params=p)
        fast = compute_gradients(trace, d)
        slow = reference_gradients(trace, d, p)
        for f in StepGradients.ARRAY_FIELDS:
            np.testing.assert_allclose(
                getattr(fast, f), getattr(slow, f), rtol=0.0, atol=1e-12
            )


def test_weight_gradients_match_frozen_state_finite_differences(rng):
    for _ in range(10):
        p = make_random_params(rng)
        s = make_random_state(rng)
        x = rng.uniform(-2, 2, 2)
        d = rng.uniform(-2, 2, 2)
        _, trace, _ = forward_step(p, s, x)
        g = compute_gradients(trace, d)
        for field, gfield in (
            ("w_input_hidden", "d_w_input_hidden"),
            ("f_input_hidden", "d_f_input_hidden"),
            ("w_hidden_output", "d_w_hidden_output"),
            ("f_hidden_output", "d_f_hidden_output"),
        ):
            arr = getattr(p, field)
            for idx in np.ndindex(arr.shape):
                fd = finite_difference_gradient(p, s, x, d, field, idx)
                assert_gradient_matches_fd(getattr(g, gfield)[idx], fd)


def test_memory_coefficient_gradients_match_finite_differences(rng):
    # alpha/beta use the same frozen-state convention as the weights
    for _ in range(10):
        p = make_random_params(rng)
        s = make_random_state(rng)
        x = rng.uniform(-2, 2, 2)
        d = rng.uniform(-2, 2, 2)
        _, trace, _ = forward_step(p, s, x)
        g = compute_gradients(trace, d)
        for field, gfield in (
            ("alpha_input", "d_alpha_input"),
            ("alpha_hidden", "d_alpha_hidden"),
            ("alpha_output", "d_alpha_output"),
            ("beta_output", "d_beta_output"),
        ):
            arr = getattr(p, field)
            for idx in np.ndindex(arr.shape):
                fd = finite_difference_gradient(p, s, x, d, field, idx)
                assert_gradient_matches_fd(getattr(g, gfield)[idx], fd)


def test_gradients_with_non_unit_output_slope_still_match_fd(rng):
    t = Topology(2, 6, 2, output_activation_slope=2.5)
    p = make_random_params(rng, t)
    s = make_random_state(rng, t)
    x = rng.uniform(-1, 1, 2)
    d = rng.uniform(-1, 1, 2)
    _, trace, _ = forward_step(p, s, x)
    g = compute_gradients(trace, d)
    for field, gfield in (("w_hidden_output", "d_w_hidden_output"),
                          ("w_input_hidden", "d_w_input_hidden"),
                          ("beta_output", "d_beta_output")):
        arr = getattr(p, field)
        for idx in np.ndindex(arr.shape):
            fd = finite_difference_gradient(p, s, x, d, field, idx)
            assert_gradient_matches_fd(getattr(g, gfield)[idx], fd)


def test_compute_gradients_rejects_wrong_target_shape(rng):
    trace, _ = random_step(rng)
    with pytest.raises(ConfigurationError):
        compute_gradients(trace, np.zeros(3))


# --- apply_gradients ---------------------------------------------------------


def zero_gradients(t: Topology = TOPO) -> StepGradients:
    return StepGradients(
        d_w_input_hidden=np.zeros((t.n_inputs, t.n_hidden)),
        d_f_input_hidden=np.zeros((t.n_inputs, t.n_hidden)),
        d_w_hidden_output=np.zeros((t.n_hidden, t.n_outputs)),
        d_f_hidden_output=np.zeros((t.n_hidden, t.n_outputs)),
        d_alpha_input=np.zeros(t.n_inputs),
        d_alpha_hidden=np.zeros(t.n_hidden),
        d_alpha_output=np.zeros(t.n_outputs),
        d_beta_output=np.zeros(t.n_outputs),
        e_output=np.zeros(t.n_outputs),
        e_hidden=np.zeros(t.n_hidden),
    )


def test_apply_zero_gradients_changes_nothing(rng):
    p = make_random_params(rng)
    q, clamps = apply_gradients(p, zero_gradients(), LearningConfig())
    assert clamps == 0
    for f in NetworkParameters.ARRAY_FIELDS:
        assert np.array_equal(getattr(p, f), getattr(q, f))


def test_apply_clamps_alpha_at_lower_bound():
    p = init_parameters(TOPO, seed=0, weight_scale=0.0)  # alpha = 0
    g = zero_gradients()
    g.d_alpha_input[:] = 1.0  # update would push alpha to -4e-6
    q, clamps = apply_gradients(p, g, LearningConfig(eta_prime=4e-6))
    assert np.all(q.alpha_input == 0.0)
    assert clamps == TOPO.n_inputs


def test_apply_clamps_beta_at_upper_bound():
    p = init_parameters(TOPO, seed=0, weight_scale=0.0)
    p.beta_output[:] = 1.0
    g = zero_gradients()
    g.d_beta_output[:] = -1.0  # update would push beta to 1 + 4e-6
    q, clamps = apply_gradients(p, g, LearningConfig(eta_prime=4e-6))
    assert np.all(q.beta_output == 1.0)
    assert clamps == TOPO.n_outputs


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_updates=st.integers(1, 40))
def test_memory_coefficients_stay_hard_limited(seed, n_updates):
    rng = np.random.default_rng(seed)
    p = make_random_params(rng)
    cfg = LearningConfig(eta=1e-2, eta_prime=0.3)  # large rate to force clamps
    for _ in range(n_updates):
        g = zero_gradients()
        for f in ("d_alpha_input", "d_alpha_hidden", "d_alpha_output", "d_beta_output"):
            getattr(g, f)[:] = rng.uniform(-5, 5, getattr(g, f).shape)
        p, _ = apply_gradients(p, g, cfg)
        for f in ("alpha_input", "alpha_hidden", "alpha_output", "beta_output"):
            arr = getattr(p, f)
            assert np.all(arr >= 0.0) and np.all(arr <= 1.0)


# --- train_on_sequence -------------------------------------------------------


def test_training_pairs_offsets():
    deltas = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    inputs, targets = training_pairs(deltas)
    assert np.array_equal(inputs, deltas[:-1])
    assert np.array_equal(targets, deltas[1:])
    with pytest.raises(DataError):
        training_pairs(deltas[:1])


def test_constant_zero_sequence_keeps_zero_network_at_zero_error():
    p = init_parameters(TOPO, seed=0, weight_scale=0.0)
    seq = diff_seq(np.zeros((30, 2)))
    cfg = LearningConfig(eta=1e-3, eta_prime=1e-3, epochs=1, warmup_zero_steps=0)
    p2, _, rec = train_on_sequence(p, reset_state(TOPO), seq, cfg)
    assert rec.mean_error == 0.0
    for f in NetworkParameters.ARRAY_FIELDS:
        assert np.array_equal(getattr(p2, f), getattr(p, f))


def test_zero_learning_rates_record_error_without_updating(rng):
    p = make_random_params(rng)
    seq = diff_seq(rng.normal(size=(20, 2)) * 0.3)
    cfg = LearningConfig(eta=0.0, eta_prime=0.0, epochs=1, warmup_zero_steps=0)
    p2, _, rec = train_on_sequence(p, reset_state(TOPO), seq, cfg)
    assert rec.mean_error > 0.0
    for f in NetworkParameters.ARRAY_FIELDS:
        assert np.array_equal(getattr(p2, f), getattr(p, f))


def test_sequence_training_matches_public_operation_chain(rng):
    """The fused inner loop must be bit-identical to the public ops."""
    params = make_random_params(rng, weight_span=0.5)
    deltas = rng.normal(size=(40, 2)) * 0.4
    seq = diff_seq(deltas)
    cfg = LearningConfig(eta=2e-3, eta_prime=2e-3, epochs=1, warmup_zero_steps=0)

    fused_params, fused_state, rec = train_on_sequence(
        params, reset_state(TOPO), seq, cfg
    )

    p, s = params.copy(), reset_state(TOPO)
    errs = []
    for x, d in zip(deltas[:-1], deltas[1:]):
        y, trace, s = forward_step(p, s, x)
        errs.append(step_error(y, d))
        g = compute_gradients(trace, d)
        p, _ = apply_gradients(p, g, cfg)

    assert rec.mean_error == sum(errs) / len(errs)
    for f in NetworkParameters.ARRAY_FIELDS:
        assert np.array_equal(getattr(fused_params, f), getattr(p, f))
    for f in fused_state.ARRAY_FIELDS:
        assert np.array_equal(getattr(fused_state, f), getattr(s, f))


def test_training_error_drops_on_sinusoidal_sequence():
    t = np.arange(120)
    deltas = np.column_stack([0.1 * np.sin(2 * np.pi * t / 24),
                              0.5 + 0.05 * np.cos(2 * np.pi * t / 24)])
    seq = diff_seq(deltas)
    cfg = LearningConfig(eta=5e-3, eta_prime=5e-3, epochs=1, warmup_zero_steps=0)
    params = init_parameters(TOPO, seed=7)
    state = reset_state(TOPO)
    errors = []
    for epoch in range(1000):
        params, state, rec = train_on_sequence(params, state, seq, cfg, epoch=epoch)
        errors.append(rec.mean_error)
    assert errors[999] < errors[0]


# --- train_dataset -----------------------------------------------------------


def test_single_vehicle_single_epoch_equals_train_on_sequence(rng):
    deltas = rng.normal(size=(30, 2)) * 0.3
    seq = diff_seq(deltas)
    cfg = LearningConfig(eta=1e-3, eta_prime=1e-3, epochs=1, warmup_zero_steps=0)
    p0 = init_parameters(TOPO, seed=3)
    via_dataset, log = train_dataset([seq], cfg, params=p0.copy())
    via_sequence, _, rec = train_on_sequence(p0, reset_state(TOPO), seq, cfg)
    assert len(log.entries) == 1
    assert log.entries[0].mean_error == rec.mean_error
    for f in NetworkParameters.ARRAY_FIELDS:
        assert np.array_equal(getattr(via_dataset, f), getattr(via_sequence, f))


def test_train_dataset_is_deterministic(rng):
    seqs = [diff_seq(rng.normal(size=(25, 2)) * 0.2, vid=f"v{i}") for i in range(3)]
    cfg = LearningConfig(eta=1e-3, eta_prime=1e-3, epochs=3, warmup_zero_steps=10)
    a, _ = train_dataset(seqs, cfg, seed=11)
    b, _ = train_dataset(seqs, cfg, seed=11)
    for f in NetworkParameters.ARRAY_FIELDS:
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_train_dataset_rejects_empty():
    with pytest.raises(DataError):
        train_dataset([], LearningConfig())


def final_training_errors(log):
    """Last recorded mean error per vehicle."""
    last = {}
    for rec in log.entries:
        last[rec.vehicle_id] = rec.mean_error
    return last


def test_constant_velocity_fleet_reaches_tiny_training_error():
    # constant deltas are exactly representable; a small run already gets close
    seqs = [diff_seq(np.tile([0.0, 0.5], (100, 1)), vid="a"),
            diff_seq(np.tile([0.0, 0.6], (100, 1)), vid="b")]
    cfg = LearningConfig(eta=3e-2, eta_prime=3e-2, epochs=40, warmup_zero_steps=50)
    params, log = train_dataset(seqs, cfg, seed=1)
    finals = final_training_errors(log)
    assert set(finals) == {"a", "b"}
    assert np.mean(list(finals.values())) < 1e-6
    # a cold-start evaluation pays a state warm-up transient but stays sane
    assert np.mean([evaluate_sequence_error(params, s) for s in seqs]) < 0.05


def test_epoch_order_variants_cover_all_vehicles(rng):
    seqs = [diff_seq(rng.normal(size=(10, 2)) * 0.1, vid=f"v{i}") for i in range(2)]
    for order, expected_first_two in (("per-vehicle", ["v0", "v0"]), ("interleaved", ["v0", "v1"])):
        cfg = LearningConfig(eta=1e-4, eta_prime=1e-4, epochs=2,
                             warmup_zero_steps=0, epoch_order=order)
        _, log = train_dataset(seqs, cfg, seed=0)
        assert [r.vehicle_id for r in log.entries[:2]] == expected_first_two
        assert len(log.entries) == 4


def test_numeric_blowup_aborts_with_located_diagnostic():
    deltas = np.tile([5.0, 5.0], (50, 1))
    seq = diff_seq(deltas, vid="runaway")
    cfg = LearningConfig(eta=1e3, eta_prime=1e3, epochs=50, warmup_zero_steps=0)
    with pytest.raises(NumericError) as exc:
        train_dataset([seq], cfg, seed=0)
    assert "runaway" in str(exc.value) or "non-finite" in str(exc.value)


def test_training_log_jsonl_shape(rng):
    seq = diff_seq(rng.normal(size=(12, 2)) * 0.1, vid="veh7")
    cfg = LearningConfig(eta=1e-4, eta_prime=1e-4, epochs=2, warmup_zero_steps=0)
    _, log = train_dataset([seq], cfg, seed=0)
    lines = log.to_jsonl(include_timing=False).strip().splitlines()
    assert len(lines) == 2
    rec = json.loads(lines[0])
    assert set(rec) == {"vehicle_id", "epoch", "mean_error", "clamp_count", "elapsed_ms"}
    assert rec["vehicle_id"] == "veh7"
    assert rec["elapsed_ms"] == 0.0
    timed = json.loads(log.to_jsonl(include_timing=True).splitlines()[0])
    assert timed["elapsed_ms"] >= 0.0


def test_learning_config_validation():
    with pytest.raises(ConfigurationError):
        LearningConfig(epochs=0)
    with pytest.raises(ConfigurationError):
        LearningConfig(eta=-1.0)
    with pytest.raises(ConfigurationError):
        LearningConfig(epoch_order="random")
