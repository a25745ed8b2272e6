"""Online learning rules for the memory neuron network.

The objective at each step is the squared output error
e(t) = sum_j (y_j(t) - d_j(t))^2.  Updates are purely online: one forward
step, one gradient evaluation, one parameter update, in sequence order.  The
gradients are *instantaneous* - the recursive dependence of the memory values
on earlier parameters is deliberately ignored (no unrolling through time).
Under that convention, with the memory state at the step frozen, the rules
below are the exact gradients of e(t)/2:

    output error        e_o = y - d
    hidden error        e_h = (1 - n_h^2) * (W_ho @ (slope * e_o))
    dW = outer(source activation, downstream error)
    dF = outer(source memory output, downstream error)
    d_beta  = slope * e_o * v_o
    d_alpha = (de/dv) * (n_prev - v_prev)   per layer, where
        de/dv_o = beta * slope * e_o
        de/dv_h = F_ho @ (slope * e_o)
        de/dv_i = F_ih @ e_h

After every update each alpha and beta is hard-limited back into [0, 1];
that clamp is what keeps the memory dynamics stable, and clamp events are
counted so training logs can report them.

The learning-rate constant `DEFAULT_LEARNING_RATE` (4e-6) and the default
epoch count (100000) are the published settings for this architecture on
10 Hz highway data; synthetic tasks typically converge much faster with a
larger rate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError, NumericError
from .network import (
    ForwardTrace,
    NetworkParameters,
    NetworkState,
    Topology,
    init_parameters,
    reset_state,
)

DEFAULT_LEARNING_RATE = 4e-6
DEFAULT_EPOCHS = 100_000

PER_VEHICLE = "per-vehicle"
INTERLEAVED = "interleaved"


@dataclass(frozen=True)
class LearningConfig:
    """Learning rates, epoch budget and warm-up length for online training.

    `epoch_order` selects how a multi-vehicle dataset is swept:
    "per-vehicle" runs every epoch on one vehicle before moving to the next;
    "interleaved" runs each epoch across all vehicles in turn.
    """

    eta: float = DEFAULT_LEARNING_RATE
    eta_prime: float = DEFAULT_LEARNING_RATE
    epochs: int = DEFAULT_EPOCHS
    warmup_zero_steps: int = 100
    epoch_order: str = PER_VEHICLE

    def __post_init__(self):
        if not self.eta >= 0 or not self.eta_prime >= 0:
            raise ConfigurationError("learning rates must be >= 0")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.warmup_zero_steps < 0:
            raise ConfigurationError("warmup_zero_steps must be >= 0")
        if self.epoch_order not in (PER_VEHICLE, INTERLEAVED):
            raise ConfigurationError(f"unknown epoch_order {self.epoch_order!r}")

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "eta_prime": self.eta_prime,
            "epochs": self.epochs,
            "warmup_zero_steps": self.warmup_zero_steps,
            "epoch_order": self.epoch_order,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LearningConfig":
        return cls(
            eta=float(d.get("eta", DEFAULT_LEARNING_RATE)),
            eta_prime=float(d.get("eta_prime", DEFAULT_LEARNING_RATE)),
            epochs=int(d.get("epochs", DEFAULT_EPOCHS)),
            warmup_zero_steps=int(d.get("warmup_zero_steps", 100)),
            epoch_order=str(d.get("epoch_order", PER_VEHICLE)),
        )


@dataclass
class StepGradients:
    """Per-step gradients, shaped exactly like the parameter arrays they update."""

    d_w_input_hidden: np.ndarray
    d_f_input_hidden: np.ndarray
    d_w_hidden_output: np.ndarray
    d_f_hidden_output: np.ndarray
    d_alpha_input: np.ndarray
    d_alpha_hidden: np.ndarray
    d_alpha_output: np.ndarray
    d_beta_output: np.ndarray
    e_output: np.ndarray
    e_hidden: np.ndarray

    ARRAY_FIELDS = (
        "d_w_input_hidden",
        "d_f_input_hidden",
        "d_w_hidden_output",
        "d_f_hidden_output",
        "d_alpha_input",
        "d_alpha_hidden",
        "d_alpha_output",
        "d_beta_output",
        "e_output",
        "e_hidden",
    )


@dataclass
class EpochRecord:
    """One completed epoch: which vehicle, mean squared error, clamp events, wall time."""

    vehicle_id: str
    epoch: int
    mean_error: float
    clamp_count: int
    elapsed_ms: float

    def to_dict(self, include_timing: bool = True) -> dict:
        return {
            "vehicle_id": self.vehicle_id,
            "epoch": self.epoch,
            "mean_error": self.mean_error,
            "clamp_count": self.clamp_count,
            "elapsed_ms": self.elapsed_ms if include_timing else 0.0,
        }


@dataclass
class TrainingLog:
    """Chronological list of epoch records for one training run."""

    entries: list[EpochRecord] = field(default_factory=list)

    def to_jsonl(self, include_timing: bool = True) -> str:
        import json

        return "".join(
            json.dumps(rec.to_dict(include_timing), sort_keys=True) + "\n"
            for rec in self.entries
        )

    def final_mean_error(self) -> float:
        if not self.entries:
            raise DataError("empty training log")
        return self.entries[-1].mean_error


def step_error(output: np.ndarray, target: np.ndarray) -> float:
    """Squared error sum_j (output_j - target_j)^2 for one step."""
    out = np.asarray(output, dtype=float)
    tgt = np.asarray(target, dtype=float)
    if out.shape != tgt.shape:
        raise ConfigurationError(f"output shape {out.shape} != target shape {tgt.shape}")
    if not (np.isfinite(out).all() and np.isfinite(tgt).all()):
        raise NumericError("non-finite value in step_error operands")
    diff = out - tgt
    return float(diff @ diff)


def compute_gradients(trace: ForwardTrace, target: np.ndarray) -> StepGradients:
    """Instantaneous gradients for the step captured in `trace`.

    Uses the parameter set the trace was produced with.  The memory
    coefficient gradients read the pre-update state snapshot, since
    dv(t)/dalpha = n(t-1) - v(t-1).
    """
    params = trace.params
    t = params.topology
    tgt = np.asarray(target, dtype=float)
    if tgt.shape != (t.n_outputs,):
        raise ConfigurationError(f"target has shape {tgt.shape}, expected ({t.n_outputs},)")

    e_out = trace.out_output - tgt
    delta_out = t.output_activation_slope * e_out

    d_w_ho = np.outer(trace.out_hidden, delta_out)
    d_f_ho = np.outer(trace.v_hidden, delta_out)
    d_beta = delta_out * trace.v_output

    e_hid = (1.0 - trace.out_hidden**2) * (params.w_hidden_output @ delta_out)
    d_w_ih = np.outer(trace.inputs, e_hid)
    d_f_ih = np.outer(trace.v_input, e_hid)

    prev = trace.prev_state
    d_alpha_out = (params.beta_output * delta_out) * (prev.n_output_prev - prev.v_output)
    d_alpha_hid = (params.f_hidden_output @ delta_out) * (prev.n_hidden_prev - prev.v_hidden)
    d_alpha_in = (params.f_input_hidden @ e_hid) * (prev.n_input_prev - prev.v_input)

    return StepGradients(
        d_w_input_hidden=d_w_ih,
        d_f_input_hidden=d_f_ih,
        d_w_hidden_output=d_w_ho,
        d_f_hidden_output=d_f_ho,
        d_alpha_input=d_alpha_in,
        d_alpha_hidden=d_alpha_hid,
        d_alpha_output=d_alpha_out,
        d_beta_output=d_beta,
        e_output=e_out,
        e_hidden=e_hid,
    )


def apply_gradients(
    params: NetworkParameters, grads: StepGradients, config: LearningConfig
) -> tuple[NetworkParameters, int]:
    """One online update.  Returns the new parameters and the number of clamp events.

    Weights move by -eta * gradient, memory coefficients by -eta' * gradient,
    then every alpha and beta is hard-limited into [0, 1].
    """
    eta, etap = config.eta, config.eta_prime
    w_ih = params.w_input_hidden - eta * grads.d_w_input_hidden
    f_ih = params.f_input_hidden - eta * grads.d_f_input_hidden
    w_ho = params.w_hidden_output - eta * grads.d_w_hidden_output
    f_ho = params.f_hidden_output - eta * grads.d_f_hidden_output

    clamps = 0

    def limited(vec, grad):
        nonlocal clamps
        raw = vec - etap * grad
        out = np.clip(raw, 0.0, 1.0)
        clamps += int(np.count_nonzero(out != raw))
        return out

    a_i = limited(params.alpha_input, grads.d_alpha_input)
    a_h = limited(params.alpha_hidden, grads.d_alpha_hidden)
    a_o = limited(params.alpha_output, grads.d_alpha_output)
    b_o = limited(params.beta_output, grads.d_beta_output)

    new = NetworkParameters(
        topology=params.topology,
        w_input_hidden=w_ih,
        f_input_hidden=f_ih,
        w_hidden_output=w_ho,
        f_hidden_output=f_ho,
        alpha_input=a_i,
        alpha_hidden=a_h,
        alpha_output=a_o,
        beta_output=b_o,
    )
    return new, clamps


def training_pairs(deltas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a differential sequence into (input, target) pairs.

    The network sees the previous step difference and must predict the next
    one, so a sequence of M deltas yields M-1 pairs.
    """
    d = np.asarray(deltas, dtype=float)
    if d.ndim != 2 or d.shape[0] < 2:
        raise DataError(f"need a (M, dim) sequence with M >= 2, got shape {d.shape}")
    return d[:-1], d[1:]


def train_on_sequence(
    params: NetworkParameters,
    state: NetworkState,
    sequence,
    config: LearningConfig,
    vehicle_id: str | None = None,
    epoch: int = 0,
) -> tuple[NetworkParameters, NetworkState, EpochRecord]:
    """One epoch of online training over one differential sequence.

    Every consecutive pair (delta[t-1] -> delta[t]) triggers forward step,
    gradient computation and parameter update, strictly in order; the
    recurrent state is carried across steps and returned so callers can carry
    it across epochs of the same sequence.  Returns the updated parameters,
    the carried state and an epoch record with the mean squared error.
    """
    deltas = _sequence_deltas(sequence)
    vid = vehicle_id if vehicle_id is not None else _sequence_id(sequence)
    inputs, targets = training_pairs(deltas)

    start = time.perf_counter()
    work = _OnlineTrainer(params, state)
    mean_err, clamps = work.run_epoch(inputs, targets, config.eta, config.eta_prime)
    elapsed_ms = (time.perf_counter() - start) * 1000.0

    new_params, new_state = work.export()
    if not (np.isfinite(mean_err) and new_params.all_finite()):
        raise NumericError(
            f"non-finite parameter after epoch {epoch} on vehicle {vid!r}"
        )
    record = EpochRecord(
        vehicle_id=vid,
        epoch=epoch,
        mean_error=mean_err,
        clamp_count=clamps,
        elapsed_ms=elapsed_ms,
    )
    return new_params, new_state, record


def train_dataset(
    dataset,
    config: LearningConfig,
    topology: Topology | None = None,
    seed: int = 0,
    weight_scale: float = 0.1,
    params: NetworkParameters | None = None,
) -> tuple[NetworkParameters, TrainingLog]:
    """Train one shared network over a list of differential sequences.

    With the default "per-vehicle" order each vehicle's sequence is trained
    for the full epoch budget before the next vehicle starts; "interleaved"
    sweeps every vehicle once per epoch.  The recurrent state is reset at the
    start of each vehicle and carried across that vehicle's epochs.  If
    `config.warmup_zero_steps` > 0 the network is first trained on that many
    zero-input/zero-target steps so the weights settle before real data.

    Pure function of (dataset, config, topology/seed/params): reruns give
    bit-identical results.
    """
    items = list(dataset)
    if not items:
        raise DataError("empty training dataset")
    if params is None:
        params = init_parameters(topology or Topology(), seed=seed, weight_scale=weight_scale)
    t = params.topology

    log = TrainingLog()
    trainer = _OnlineTrainer(params, reset_state(t))

    if config.warmup_zero_steps > 0:
        zeros_in = np.zeros((config.warmup_zero_steps, t.n_inputs))
        zeros_tgt = np.zeros((config.warmup_zero_steps, t.n_outputs))
        trainer.run_epoch(zeros_in, zeros_tgt, config.eta, config.eta_prime)

    prepared = [
        (_sequence_id(seq, index=i), training_pairs(_sequence_deltas(seq)))
        for i, seq in enumerate(items)
    ]

    def run_one(vid, pairs, epoch):
        start = time.perf_counter()
        mean_err, clamps = trainer.run_epoch(pairs[0], pairs[1], config.eta, config.eta_prime)
        elapsed_ms = (time.perf_counter() - start) * 1000.0
        if not (np.isfinite(mean_err) and trainer.params_finite()):
            raise NumericError(f"non-finite parameter during epoch {epoch} of vehicle {vid!r}")
        log.entries.append(EpochRecord(vid, epoch, mean_err, clamps, elapsed_ms))

    if config.epoch_order == PER_VEHICLE:
        for vid, pairs in prepared:
            trainer.reset_recurrent_state()
            for epoch in range(config.epochs):
                run_one(vid, pairs, epoch)
    else:
        for epoch in range(config.epochs):
            for vid, pairs in prepared:
                trainer.reset_recurrent_state()
                run_one(vid, pairs, epoch)

    final_params, _ = trainer.export()
    return final_params, log


def evaluate_sequence_error(
    params: NetworkParameters, sequence, state: NetworkState | None = None
) -> float:
    """Mean squared one-step-ahead error over a sequence, without updating parameters."""
    frozen = LearningConfig(eta=0.0, eta_prime=0.0, epochs=1, warmup_zero_steps=0)
    st = state if state is not None else reset_state(params.topology)
    _, _, record = train_on_sequence(params, st, sequence, frozen)
    return record.mean_error


def _sequence_deltas(sequence) -> np.ndarray:
    deltas = getattr(sequence, "deltas", sequence)
    arr = np.asarray(deltas, dtype=float)
    if arr.ndim != 2:
        raise DataError(f"differential sequence must be 2-D, got shape {arr.shape}")
    return arr


def _sequence_id(sequence, index: int | None = None) -> str:
    vid = getattr(sequence, "vehicle_id", None)
    if vid is not None:
        return str(vid)
    return f"seq{index}" if index is not None else "seq"


class _OnlineTrainer:
    """Low-overhead inner loop for per-sample training.

    Performs exactly the same floating-point operations, in the same order,
    as the forward_step / compute_gradients / apply_gradients chain, but
    without per-step dataclass construction or validation.  The test suite
    asserts bit-identical results against the public operations.
    """

    def __init__(self, params: NetworkParameters, state: NetworkState):
        self.topology = params.topology
        t = self.topology
        self.slope = t.output_activation_slope
        self.clip = t.output_activation_range

        self.w_ih = params.w_input_hidden.copy()
        self.f_ih = params.f_input_hidden.copy()
        self.w_ho = params.w_hidden_output.copy()
        self.f_ho = params.f_hidden_output.copy()
        self.a_i = params.alpha_input.copy()
        self.a_h = params.alpha_hidden.copy()
        self.a_o = params.alpha_output.copy()
        self.b_o = params.beta_output.copy()

        self.v_i = state.v_input.copy()
        self.v_h = state.v_hidden.copy()
        self.v_o = state.v_output.copy()
        self.np_i = state.n_input_prev.copy()
        self.np_h = state.n_hidden_prev.copy()
        self.np_o = state.n_output_prev.copy()

    def reset_recurrent_state(self):
        for buf in (self.v_i, self.v_h, self.v_o, self.np_i, self.np_h, self.np_o):
            buf[:] = 0.0

    def params_finite(self) -> bool:
        return all(
            np.isfinite(a).all()
            for a in (self.w_ih, self.f_ih, self.w_ho, self.f_ho,
                      self.a_i, self.a_h, self.a_o, self.b_o)
        )

    def run_epoch(self, inputs: np.ndarray, targets: np.ndarray, eta: float, etap: float):
        """Train over (inputs, targets) pairs in order; returns (mean error, clamp count).

        A diverging epoch is allowed to overflow silently here; callers check
        finiteness afterwards and report the epoch and vehicle.
        """
        with np.errstate(over="ignore", invalid="ignore"):
            return self._run_epoch_inner(inputs, targets, eta, etap)

    def _run_epoch_inner(self, inputs, targets, eta, etap):
        total_err = 0.0
        clamps = 0
        n_steps = inputs.shape[0]
        for k in range(n_steps):
            x = inputs[k]
            d = targets[k]

            # advance memory neurons from stored previous activations
            v_i = self.a_i * self.np_i + (1.0 - self.a_i) * self.v_i
            v_h = self.a_h * self.np_h + (1.0 - self.a_h) * self.v_h
            v_o = self.a_o * self.np_o + (1.0 - self.a_o) * self.v_o

            m_h = x @ self.w_ih + v_i @ self.f_ih
            n_h = np.tanh(m_h)
            m_o = n_h @ self.w_ho + v_h @ self.f_ho + self.b_o * v_o
            y = self.slope * m_o
            if self.clip is not None:
                y = np.clip(y, -self.clip, self.clip)

            e_out = y - d
            total_err += float(e_out @ e_out)
            delta_out = self.slope * e_out

            e_hid = (1.0 - n_h**2) * (self.w_ho @ delta_out)

            # memory-coefficient gradients use the pre-update snapshot
            d_a_o = (self.b_o * delta_out) * (self.np_o - self.v_o)
            d_a_h = (self.f_ho @ delta_out) * (self.np_h - self.v_h)
            d_a_i = (self.f_ih @ e_hid) * (self.np_i - self.v_i)
            d_b_o = delta_out * v_o

            self.w_ih -= eta * np.outer(x, e_hid)
            self.f_ih -= eta * np.outer(v_i, e_hid)
            self.w_ho -= eta * np.outer(n_h, delta_out)
            self.f_ho -= eta * np.outer(v_h, delta_out)

            for coeff, grad in ((self.a_i, d_a_i), (self.a_h, d_a_h),
                                (self.a_o, d_a_o), (self.b_o, d_b_o)):
                raw = coeff - etap * grad
                np.clip(raw, 0.0, 1.0, out=coeff)
                clamps += int(np.count_nonzero(coeff != raw))

            # carry recurrent state to the next step
            self.v_i, self.v_h, self.v_o = v_i, v_h, v_o
            self.np_i = x.astype(float, copy=True)
            self.np_h = n_h
            self.np_o = y

        return total_err / n_steps, clamps

    def export(self) -> tuple[NetworkParameters, NetworkState]:
        params = NetworkParameters(
            topology=self.topology,
            w_input_hidden=self.w_ih.copy(),
            f_input_hidden=self.f_ih.copy(),
            w_hidden_output=self.w_ho.copy(),
            f_hidden_output=self.f_ho.copy(),
            alpha_input=self.a_i.copy(),
            alpha_hidden=self.a_h.copy(),
            alpha_output=self.a_o.copy(),
            beta_output=self.b_o.copy(),
        )
        state = NetworkState(
            v_input=np.asarray(self.v_i, dtype=float).copy(),
            v_hidden=np.asarray(self.v_h, dtype=float).copy(),
            v_output=np.asarray(self.v_o, dtype=float).copy(),
            n_input_prev=np.asarray(self.np_i, dtype=float).copy(),
            n_hidden_prev=np.asarray(self.np_h, dtype=float).copy(),
            n_output_prev=np.asarray(self.np_o, dtype=float).copy(),
        )
        return params, state
