"""Naive scalar-loop re-derivation of the learning-rule gradients.

This module exists purely as an independent oracle for tests: it walks every
weight and coefficient with plain Python loops and float arithmetic, sharing
no code path with `training.compute_gradients`.  Do not use it for actual
training; it is slow on purpose.
"""

from __future__ import annotations

import numpy as np

from .network import ForwardTrace, NetworkParameters
from .training import StepGradients


def reference_gradients(
    trace: ForwardTrace, target, params: NetworkParameters
) -> StepGradients:
    """Element-by-element gradient computation for one recorded forward step."""
    topo = params.topology
    ni, nh, no = topo.n_inputs, topo.n_hidden, topo.n_outputs
    slope = float(topo.output_activation_slope)

    x = [float(trace.inputs[k]) for k in range(ni)]
    v_in = [float(trace.v_input[k]) for k in range(ni)]
    v_hid = [float(trace.v_hidden[k]) for k in range(nh)]
    v_out = [float(trace.v_output[j]) for j in range(no)]
    n_hid = [float(trace.out_hidden[j]) for j in range(nh)]
    y = [float(trace.out_output[j]) for j in range(no)]
    d = [float(target[j]) for j in range(no)]

    prev = trace.prev_state
    n_prev_in = [float(prev.n_input_prev[k]) for k in range(ni)]
    n_prev_hid = [float(prev.n_hidden_prev[j]) for j in range(nh)]
    n_prev_out = [float(prev.n_output_prev[j]) for j in range(no)]
    v_prev_in = [float(prev.v_input[k]) for k in range(ni)]
    v_prev_hid = [float(prev.v_hidden[j]) for j in range(nh)]
    v_prev_out = [float(prev.v_output[j]) for j in range(no)]

    # output-layer error and its propagation through the linear activation
    e_out = [y[j] - d[j] for j in range(no)]
    delta = [slope * e_out[j] for j in range(no)]

    d_w_ho = [[0.0] * no for _ in range(nh)]
    d_f_ho = [[0.0] * no for _ in range(nh)]
    for k in range(nh):
        for j in range(no):
            d_w_ho[k][j] = delta[j] * n_hid[k]
            d_f_ho[k][j] = delta[j] * v_hid[k]

    d_beta = [delta[j] * v_out[j] for j in range(no)]

    # hidden-layer error: tanh'(m) = 1 - tanh(m)^2, summed over output fanout
    e_hid = [0.0] * nh
    for j in range(nh):
        acc = 0.0
        for p in range(no):
            acc += delta[p] * float(params.w_hidden_output[j, p])
        e_hid[j] = (1.0 - n_hid[j] * n_hid[j]) * acc

    d_w_ih = [[0.0] * nh for _ in range(ni)]
    d_f_ih = [[0.0] * nh for _ in range(ni)]
    for k in range(ni):
        for j in range(nh):
            d_w_ih[k][j] = e_hid[j] * x[k]
            d_f_ih[k][j] = e_hid[j] * v_in[k]

    # memory coefficients: de/dv times dv/dalpha = n(t-1) - v(t-1)
    d_a_out = [0.0] * no
    for j in range(no):
        de_dv = float(params.beta_output[j]) * delta[j]
        d_a_out[j] = de_dv * (n_prev_out[j] - v_prev_out[j])

    d_a_hid = [0.0] * nh
    for j in range(nh):
        de_dv = 0.0
        for s in range(no):
            de_dv += float(params.f_hidden_output[j, s]) * delta[s]
        d_a_hid[j] = de_dv * (n_prev_hid[j] - v_prev_hid[j])

    d_a_in = [0.0] * ni
    for k in range(ni):
        de_dv = 0.0
        for s in range(nh):
            de_dv += float(params.f_input_hidden[k, s]) * e_hid[s]
        d_a_in[k] = de_dv * (n_prev_in[k] - v_prev_in[k])

    return StepGradients(
        d_w_input_hidden=np.array(d_w_ih, dtype=float),
        d_f_input_hidden=np.array(d_f_ih, dtype=float),
        d_w_hidden_output=np.array(d_w_ho, dtype=float),
        d_f_hidden_output=np.array(d_f_ho, dtype=float),
        d_alpha_input=np.array(d_a_in, dtype=float),
        d_alpha_hidden=np.array(d_a_hid, dtype=float),
        d_alpha_output=np.array(d_a_out, dtype=float),
        d_beta_output=np.array(d_beta, dtype=float),
        e_output=np.array(e_out, dtype=float),
        e_hidden=np.array(e_hid, dtype=float),
    )
