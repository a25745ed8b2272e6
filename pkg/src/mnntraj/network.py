"""Memory neuron network core: topology, parameters, recurrent state, forward pass.

The network is a two-layer perceptron (tanh hidden layer, linear output) in
which every network neuron owns a companion *memory neuron*.  A memory neuron
keeps an exponentially weighted history of its parent neuron's activation,

    v(t) = alpha * n(t-1) + (1 - alpha) * v(t-1),        0 <= alpha <= 1,

and feeds it into the next layer through dedicated memory weights.  The
output layer additionally feeds its own memory back into its net input
(coefficient beta), so the network output depends on its own past outputs.
Keeping every alpha and beta inside [0, 1] makes each v(t) a running convex
combination of past activations, which is what keeps the recurrent dynamics
bounded.

Within one time step the order of operations is fixed: all memory neurons are
advanced first, using activations stored at the previous step, and only then
are the hidden and output sums evaluated.  The stored pre-update state is
snapshotted on the `ForwardTrace` because the learning rules need both the
old and the new memory values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InputError

PARAMS_FORMAT = "mnntraj-params"
PARAMS_VERSION = 1


@dataclass(frozen=True)
class Topology:
    """Layer sizes and output activation settings.

    The output activation is linear with slope `output_activation_slope`;
    if `output_activation_range` is set the output is clipped to the
    symmetric interval [-range, +range] (in meters per sample step).
    """

    n_inputs: int = 2
    n_hidden: int = 6
    n_outputs: int = 2
    output_activation_slope: float = 1.0
    output_activation_range: float | None = None

    def __post_init__(self):
        for name in ("n_inputs", "n_hidden", "n_outputs"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.output_activation_slope > 0:
            raise ConfigurationError(
                f"output_activation_slope must be > 0, got {self.output_activation_slope}"
            )
        if self.output_activation_range is not None and not self.output_activation_range > 0:
            raise ConfigurationError(
                f"output_activation_range must be > 0 or None, got {self.output_activation_range}"
            )

    def to_dict(self) -> dict:
        return {
            "n_inputs": self.n_inputs,
            "n_hidden": self.n_hidden,
            "n_outputs": self.n_outputs,
            "output_activation_slope": self.output_activation_slope,
            "output_activation_range": self.output_activation_range,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Topology":
        return cls(
            n_inputs=int(d["n_inputs"]),
            n_hidden=int(d["n_hidden"]),
            n_outputs=int(d["n_outputs"]),
            output_activation_slope=float(d.get("output_activation_slope", 1.0)),
            output_activation_range=(
                None
                if d.get("output_activation_range") is None
                else float(d["output_activation_range"])
            ),
        )


@dataclass
class NetworkParameters:
    """All trainable quantities.

    Weight matrices are stored source-major: `w_input_hidden[k, j]` connects
    input neuron k to hidden neuron j, and `f_input_hidden[k, j]` connects the
    memory neuron of input k to hidden neuron j (same layout one layer up).
    `alpha_*` are the per-neuron memory decay coefficients and `beta_output`
    the output-layer memory feedback gains; all of them live in [0, 1].
    """

    topology: Topology
    w_input_hidden: np.ndarray
    f_input_hidden: np.ndarray
    w_hidden_output: np.ndarray
    f_hidden_output: np.ndarray
    alpha_input: np.ndarray
    alpha_hidden: np.ndarray
    alpha_output: np.ndarray
    beta_output: np.ndarray

    _MATRIX_FIELDS = (
        "w_input_hidden",
        "f_input_hidden",
        "w_hidden_output",
        "f_hidden_output",
    )
    _VECTOR_FIELDS = ("alpha_input", "alpha_hidden", "alpha_output", "beta_output")
    ARRAY_FIELDS = _MATRIX_FIELDS + _VECTOR_FIELDS

    def __post_init__(self):
        t = self.topology
        expected = {
            "w_input_hidden": (t.n_inputs, t.n_hidden),
            "f_input_hidden": (t.n_inputs, t.n_hidden),
            "w_hidden_output": (t.n_hidden, t.n_outputs),
            "f_hidden_output": (t.n_hidden, t.n_outputs),
            "alpha_input": (t.n_inputs,),
            "alpha_hidden": (t.n_hidden,),
            "alpha_output": (t.n_outputs,),
            "beta_output": (t.n_outputs,),
        }
        for name, shape in expected.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ConfigurationError(
                    f"{name} has shape {arr.shape}, expected {shape}"
                )
            setattr(self, name, arr)
        for name in self._VECTOR_FIELDS:
            arr = getattr(self, name)
            # range check only for finite values: non-finite parameters are
            # diagnosed by the training guards, which can name epoch/vehicle
            if np.isfinite(arr).all() and ((arr < 0.0) | (arr > 1.0)).any():
                raise ConfigurationError(f"{name} entries must lie in [0, 1]: {arr!r}")

    def copy(self) -> "NetworkParameters":
        return NetworkParameters(
            self.topology, *(getattr(self, f).copy() for f in self.ARRAY_FIELDS)
        )

    def all_finite(self) -> bool:
        return all(np.isfinite(getattr(self, f)).all() for f in self.ARRAY_FIELDS)

    def allclose(self, other: "NetworkParameters", atol: float = 0.0) -> bool:
        return self.topology == other.topology and all(
            np.allclose(getattr(self, f), getattr(other, f), rtol=0.0, atol=atol)
            for f in self.ARRAY_FIELDS
        )


@dataclass
class NetworkState:
    """Per-neuron memory outputs v(t) plus the activations n(t-1) they decay toward."""

    v_input: np.ndarray
    v_hidden: np.ndarray
    v_output: np.ndarray
    n_input_prev: np.ndarray
    n_hidden_prev: np.ndarray
    n_output_prev: np.ndarray

    ARRAY_FIELDS = (
        "v_input",
        "v_hidden",
        "v_output",
        "n_input_prev",
        "n_hidden_prev",
        "n_output_prev",
    )

    def copy(self) -> "NetworkState":
        return NetworkState(*(getattr(self, f).copy() for f in self.ARRAY_FIELDS))

    def matches(self, topology: Topology) -> bool:
        t = topology
        return (
            self.v_input.shape == (t.n_inputs,)
            and self.v_hidden.shape == (t.n_hidden,)
            and self.v_output.shape == (t.n_outputs,)
            and self.n_input_prev.shape == (t.n_inputs,)
            and self.n_hidden_prev.shape == (t.n_hidden,)
            and self.n_output_prev.shape == (t.n_outputs,)
        )


@dataclass
class ForwardTrace:
    """Every intermediate quantity of one forward step, kept for the learning rules.

    `prev_state` is the state *before* the memory neurons were advanced; the
    memory-coefficient updates need n(t-1) - v(t-1).  `params` is the
    parameter set that produced this trace.
    """

    params: NetworkParameters
    inputs: np.ndarray
    v_input: np.ndarray
    v_hidden: np.ndarray
    v_output: np.ndarray
    net_hidden: np.ndarray
    out_hidden: np.ndarray
    net_output: np.ndarray
    out_output: np.ndarray
    prev_state: NetworkState


def init_parameters(
    topology: Topology, seed: int = 0, weight_scale: float = 0.1
) -> NetworkParameters:
    """Fresh parameters: weights uniform in [-weight_scale, +weight_scale], memory coefficients zero.

    Deterministic for a fixed seed.  A scale of 0 yields an all-zero network.
    """
    if weight_scale < 0:
        raise ConfigurationError(f"weight_scale must be >= 0, got {weight_scale}")
    t = topology
    rng = np.random.default_rng(seed)

    def draw(shape):
        return rng.uniform(-weight_scale, weight_scale, size=shape)

    return NetworkParameters(
        topology=t,
        w_input_hidden=draw((t.n_inputs, t.n_hidden)),
        f_input_hidden=draw((t.n_inputs, t.n_hidden)),
        w_hidden_output=draw((t.n_hidden, t.n_outputs)),
        f_hidden_output=draw((t.n_hidden, t.n_outputs)),
        alpha_input=np.zeros(t.n_inputs),
        alpha_hidden=np.zeros(t.n_hidden),
        alpha_output=np.zeros(t.n_outputs),
        beta_output=np.zeros(t.n_outputs),
    )


def reset_state(topology: Topology) -> NetworkState:
    """All-zero recurrent state (the fixed point of the memory update for empty history)."""
    t = topology
    return NetworkState(
        v_input=np.zeros(t.n_inputs),
        v_hidden=np.zeros(t.n_hidden),
        v_output=np.zeros(t.n_outputs),
        n_input_prev=np.zeros(t.n_inputs),
        n_hidden_prev=np.zeros(t.n_hidden),
        n_output_prev=np.zeros(t.n_outputs),
    )


def update_memory(state: NetworkState, params: NetworkParameters) -> NetworkState:
    """Advance every memory neuron one step: v(t) = alpha*n(t-1) + (1-alpha)*v(t-1).

    The stored previous activations are left untouched.
    """
    p = params
    return NetworkState(
        v_input=p.alpha_input * state.n_input_prev + (1.0 - p.alpha_input) * state.v_input,
        v_hidden=p.alpha_hidden * state.n_hidden_prev + (1.0 - p.alpha_hidden) * state.v_hidden,
        v_output=p.alpha_output * state.n_output_prev + (1.0 - p.alpha_output) * state.v_output,
        n_input_prev=state.n_input_prev.copy(),
        n_hidden_prev=state.n_hidden_prev.copy(),
        n_output_prev=state.n_output_prev.copy(),
    )


def forward_step(
    params: NetworkParameters, state: NetworkState, inputs: np.ndarray
) -> tuple[np.ndarray, ForwardTrace, NetworkState]:
    """One time step of the network.

    Order of operations: advance all memory neurons from the stored previous
    activations, then evaluate

        m_h = x @ W_ih + v_i @ F_ih            n_h = tanh(m_h)
        m_o = n_h @ W_ho + v_h @ F_ho + beta*v_o
        y   = slope * m_o                      (clipped if a range is set)

    Returns the output, a full trace for the learning rules, and the next
    state (new memory values; x, n_h, y stored as the new previous
    activations).
    """
    t = params.topology
    x = np.asarray(inputs, dtype=float)
    if x.shape != (t.n_inputs,):
        raise ConfigurationError(f"input has shape {x.shape}, expected ({t.n_inputs},)")
    if not np.isfinite(x).all():
        raise InputError(f"non-finite network input: {x!r}")
    if not state.matches(t):
        raise ConfigurationError("state dimensions do not match the topology")

    mem = update_memory(state, params)
    v_i, v_h, v_o = mem.v_input, mem.v_hidden, mem.v_output

    m_h = x @ params.w_input_hidden + v_i @ params.f_input_hidden
    n_h = np.tanh(m_h)
    m_o = n_h @ params.w_hidden_output + v_h @ params.f_hidden_output + params.beta_output * v_o
    y = t.output_activation_slope * m_o
    if t.output_activation_range is not None:
        y = np.clip(y, -t.output_activation_range, t.output_activation_range)

    trace = ForwardTrace(
        params=params,
        inputs=x.copy(),
        v_input=v_i,
        v_hidden=v_h,
        v_output=v_o,
        net_hidden=m_h,
        out_hidden=n_h,
        net_output=m_o,
        out_output=y,
        prev_state=state.copy(),
    )
    next_state = NetworkState(
        v_input=v_i.copy(),
        v_hidden=v_h.copy(),
        v_output=v_o.copy(),
        n_input_prev=x.copy(),
        n_hidden_prev=n_h.copy(),
        n_output_prev=y.copy(),
    )
    return y.copy(), trace, next_state


# --- parameter serialization ------------------------------------------------
#
# Flat, versioned JSON document: topology first, then every matrix/vector
# under an explicit field tag, row-major.  Values are written with Python's
# shortest round-trip float repr, so save -> load is bit-exact.


def parameters_to_dict(params: NetworkParameters) -> dict:
    doc = {
        "format": PARAMS_FORMAT,
        "version": PARAMS_VERSION,
        "topology": params.topology.to_dict(),
    }
    for name in NetworkParameters.ARRAY_FIELDS:
        doc[name] = getattr(params, name).tolist()
    return doc


def parameters_from_dict(doc: dict) -> NetworkParameters:
    if doc.get("format") != PARAMS_FORMAT:
        raise ConfigurationError(f"not a parameter document: format={doc.get('format')!r}")
    if doc.get("version") != PARAMS_VERSION:
        raise ConfigurationError(f"unsupported parameter document version {doc.get('version')!r}")
    topology = Topology.from_dict(doc["topology"])
    arrays = {name: np.asarray(doc[name], dtype=float) for name in NetworkParameters.ARRAY_FIELDS}
    return NetworkParameters(topology=topology, **arrays)


def save_parameters(params: NetworkParameters, path: str | Path, extra: dict | None = None) -> None:
    doc = parameters_to_dict(params)
    if extra:
        doc["meta"] = extra
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_parameters(path: str | Path) -> NetworkParameters:
    return parameters_from_dict(json.loads(Path(path).read_text()))
