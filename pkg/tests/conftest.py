"""Shared fixtures and independent numeric oracles for the test suite.

The finite-difference harness here re-implements the frozen-state forward
pass with plain scalar math so it shares nothing with the package's forward
or gradient code.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from mnntraj import NetworkParameters, NetworkState, Topology


def make_random_params(rng: np.random.Generator, topology: Topology | None = None,
                       weight_span: float = 1.0) -> NetworkParameters:
    """Random valid parameters: weights in +-weight_span, alpha/beta in [0, 1]."""
    t = topology or Topology()
    return NetworkParameters(
        topology=t,
        w_input_hidden=rng.uniform(-weight_span, weight_span, (t.n_inputs, t.n_hidden)),
        f_input_hidden=rng.uniform(-weight_span, weight_span, (t.n_inputs, t.n_hidden)),
        w_hidden_output=rng.uniform(-weight_span, weight_span, (t.n_hidden, t.n_outputs)),
        f_hidden_output=rng.uniform(-weight_span, weight_span, (t.n_hidden, t.n_outputs)),
        alpha_input=rng.uniform(0.0, 1.0, t.n_inputs),
        alpha_hidden=rng.uniform(0.0, 1.0, t.n_hidden),
        alpha_output=rng.uniform(0.0, 1.0, t.n_outputs),
        beta_output=rng.uniform(0.0, 1.0, t.n_outputs),
    )


def make_random_state(rng: np.random.Generator, topology: Topology | None = None,
                      span: float = 1.0) -> NetworkState:
    t = topology or Topology()
    return NetworkState(
        v_input=rng.uniform(-span, span, t.n_inputs),
        v_hidden=rng.uniform(-span, span, t.n_hidden),
        v_output=rng.uniform(-span, span, t.n_outputs),
        n_input_prev=rng.uniform(-span, span, t.n_inputs),
        n_hidden_prev=rng.uniform(-span, span, t.n_hidden),
        n_output_prev=rng.uniform(-span, span, t.n_outputs),
    )


def scalar_frozen_loss(params: NetworkParameters, snapshot: NetworkState,
                       inputs, target) -> float:
    """Half squared error of one forward step, memory state frozen at `snapshot`.

    Scalar reimplementation: the memory values are recomputed from the frozen
    snapshot via the convex combination, then the two affine layers are
    evaluated with explicit loops.  The one-step update rules are exact
    gradients of this quantity.
    """
    t = params.topology
    ni, nh, no = t.n_inputs, t.n_hidden, t.n_outputs
    a_i = params.alpha_input
    a_h = params.alpha_hidden
    a_o = params.alpha_output

    v_i = [a_i[k] * snapshot.n_input_prev[k] + (1 - a_i[k]) * snapshot.v_input[k]
           for k in range(ni)]
    v_h = [a_h[j] * snapshot.n_hidden_prev[j] + (1 - a_h[j]) * snapshot.v_hidden[j]
           for j in range(nh)]
    v_o = [a_o[j] * snapshot.n_output_prev[j] + (1 - a_o[j]) * snapshot.v_output[j]
           for j in range(no)]

    n_h = []
    for j in range(nh):
        m = 0.0
        for k in range(ni):
            m += params.w_input_hidden[k, j] * inputs[k]
            m += params.f_input_hidden[k, j] * v_i[k]
        n_h.append(math.tanh(m))

    loss = 0.0
    for j in range(no):
        m = params.beta_output[j] * v_o[j]
        for k in range(nh):
            m += params.w_hidden_output[k, j] * n_h[k]
            m += params.f_hidden_output[k, j] * v_h[k]
        y = t.output_activation_slope * m
        loss += (y - target[j]) ** 2
    return 0.5 * loss


def finite_difference_gradient(params: NetworkParameters, snapshot: NetworkState,
                               inputs, target, field: str, index,
                               h: float = 1e-6) -> float:
    """Central difference of the frozen-state half squared error w.r.t. one entry."""
    def loss_at(value: float) -> float:
        p = params.copy()
        getattr(p, field)[index] = value
        return scalar_frozen_loss(p, snapshot, inputs, target)

    base = float(getattr(params, field)[index])
    return (loss_at(base + h) - loss_at(base - h)) / (2.0 * h)


def assert_gradient_matches_fd(analytic: float, fd: float,
                               rel_tol: float = 1e-5, noise_floor: float = 1e-6):
    """Relative comparison with an absolute fallback at finite-difference noise level."""
    scale = max(abs(analytic), abs(fd))
    if scale >= noise_floor:
        rel = abs(analytic - fd) / scale
        assert rel < rel_tol, f"relative error {rel:.2e} (analytic={analytic}, fd={fd})"
    else:
        assert abs(analytic - fd) < 1e-8


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
