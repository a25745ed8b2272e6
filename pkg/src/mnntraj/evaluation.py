"""RMSE metric, per-horizon report tables, and plot-ready overlay data.

The headline metric averages, across vehicles, the per-vehicle root of the
mean squared Euclidean position error over the first T_H prediction steps
(mean of roots, not root of means):

    RMSE(T_H) = (1/N) * sum_n sqrt( (1/T_H) * sum_{t<=T_H} ||x_t - x_hat_t||^2 )

Reports carry two variants per horizon: "cumulative" (the definition above,
errors accumulated from the first step up to the horizon) and
"instantaneous" (the mean across vehicles of the error at exactly the
horizon step).  Published per-second tables do not always say which variant
they use, so both are reported and labeled; cumulative is the headline.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError
from .pipeline import Trajectory

REPORT_FORMAT = "mnntraj-report"
REPORT_VERSION = 1

DEFAULT_HORIZONS = (1.0, 2.0, 3.0, 4.0, 5.0)

# Published reference RMSE (meters) for this architecture on the NGSIM US-101
# benchmark, 1-5 s horizons.  Reference targets for users who have the
# dataset; not reproduced by this package's test suite because the original
# preprocessing and split are unspecified.
NGSIM_REFERENCE_RMSE = {1.0: 0.36, 2.0: 0.85, 3.0: 1.38, 4.0: 1.92, 5.0: 2.74}

VARIANT_NOTE = (
    "cumulative = per-vehicle root mean squared error over all steps up to the "
    "horizon, averaged across vehicles; instantaneous = mean across vehicles of "
    "the error at exactly the horizon step. Published per-second tables do not "
    "always state which variant they report."
)


@dataclass
class HorizonReport:
    """Per-horizon RMSE table plus provenance (config echo and fingerprint)."""

    horizons: list[float]
    rmse_cumulative: list[float]
    rmse_instantaneous: list[float]
    n_vehicles: int
    config_fingerprint: str = ""
    config_echo: dict = field(default_factory=dict)
    notes: str = VARIANT_NOTE

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "horizons": list(self.horizons),
            "rmse_cumulative": list(self.rmse_cumulative),
            "rmse_instantaneous": list(self.rmse_instantaneous),
            "n_vehicles": self.n_vehicles,
            "config_fingerprint": self.config_fingerprint,
            "config_echo": self.config_echo,
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "HorizonReport":
        if doc.get("format") != REPORT_FORMAT:
            raise ConfigurationError(f"not a report document: {doc.get('format')!r}")
        return cls(
            horizons=[float(h) for h in doc["horizons"]],
            rmse_cumulative=[float(v) for v in doc["rmse_cumulative"]],
            rmse_instantaneous=[float(v) for v in doc["rmse_instantaneous"]],
            n_vehicles=int(doc["n_vehicles"]),
            config_fingerprint=str(doc.get("config_fingerprint", "")),
            config_echo=dict(doc.get("config_echo", {})),
            notes=str(doc.get("notes", "")),
        )


def config_fingerprint(config: dict) -> str:
    """Stable hash of a configuration mapping (sha256 of canonical JSON)."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _paired_points(predictions, truths, min_steps: int):
    if len(predictions) != len(truths):
        raise DataError(
            f"{len(predictions)} predictions vs {len(truths)} ground-truth trajectories"
        )
    if not predictions:
        raise DataError("no trajectories to evaluate")
    pairs = []
    for pred, truth in zip(predictions, truths):
        p = pred.points if isinstance(pred, Trajectory) else np.asarray(pred, dtype=float)
        q = truth.points if isinstance(truth, Trajectory) else np.asarray(truth, dtype=float)
        if p.shape[0] < min_steps or q.shape[0] < min_steps:
            raise DataError(
                f"need >= {min_steps} steps per trajectory, got {p.shape[0]} vs {q.shape[0]}"
            )
        pairs.append((p, q))
    return pairs


def rmse(predictions, truths, horizon_steps: int) -> float:
    """Mean over vehicles of the per-vehicle RMS Euclidean error over `horizon_steps`."""
    if horizon_steps < 1:
        raise DataError(f"horizon_steps must be >= 1, got {horizon_steps}")
    per_vehicle = []
    for p, q in _paired_points(predictions, truths, horizon_steps):
        err = p[:horizon_steps] - q[:horizon_steps]
        sq = np.einsum("ij,ij->i", err, err)
        per_vehicle.append(np.sqrt(sq.mean()))
    return float(np.mean(per_vehicle))


def instantaneous_error(predictions, truths, step: int) -> float:
    """Mean over vehicles of the Euclidean error at exactly `step` (1-based)."""
    if step < 1:
        raise DataError(f"step must be >= 1, got {step}")
    dists = []
    for p, q in _paired_points(predictions, truths, step):
        dists.append(np.linalg.norm(p[step - 1] - q[step - 1]))
    return float(np.mean(dists))


def horizon_table(
    predictions,
    truths,
    rate_hz: float,
    horizons=DEFAULT_HORIZONS,
    config_echo: dict | None = None,
) -> HorizonReport:
    """Both RMSE variants for each requested horizon (seconds).

    `config_echo` (seed, experiment settings, input identifiers) is embedded
    in the report and fingerprinted so a report is traceable to its run.
    """
    if not rate_hz > 0:
        raise ConfigurationError(f"rate_hz must be > 0, got {rate_hz}")
    horizons = [float(h) for h in horizons]
    cumulative = []
    instantaneous = []
    for h in horizons:
        steps = int(np.floor(h * rate_hz))
        if steps < 1:
            raise DataError(f"horizon {h}s covers no steps at {rate_hz} Hz")
        cumulative.append(rmse(predictions, truths, steps))
        instantaneous.append(instantaneous_error(predictions, truths, steps))
    echo = dict(config_echo or {})
    return HorizonReport(
        horizons=horizons,
        rmse_cumulative=cumulative,
        rmse_instantaneous=instantaneous,
        n_vehicles=len(predictions),
        config_fingerprint=config_fingerprint(echo) if echo else "",
        config_echo=echo,
    )


def emit_report(report: HorizonReport, format: str = "structured") -> str:
    """Serialize a report: 'structured' JSON (lossless round-trip) or 'table-text'."""
    if format == "structured":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if format == "table-text":
        lines = [
            f"Horizon RMSE over {report.n_vehicles} vehicles (meters)",
            f"{'horizon_s':>10} {'cumulative':>12} {'instantaneous':>14}",
        ]
        for h, c, i in zip(report.horizons, report.rmse_cumulative, report.rmse_instantaneous):
            lines.append(f"{h:>10.2f} {c:>12.4f} {i:>14.4f}")
        if report.config_fingerprint:
            lines.append(f"config fingerprint: {report.config_fingerprint}")
        lines.append(f"note: {report.notes}")
        return "\n".join(lines) + "\n"
    raise ConfigurationError(f"unknown report format {format!r}")


def load_report(text: str) -> HorizonReport:
    """Inverse of emit_report(..., 'structured')."""
    return HorizonReport.from_dict(json.loads(text))


OVERLAY_COLUMNS = "vehicle_id,step_index,t_seconds,x_pred,y_pred,x_true,y_true,phase"


def emit_overlay(
    prediction: Trajectory | None,
    truth: Trajectory | None,
    history: Trajectory,
) -> str:
    """Columnar text for history/prediction overlays, one row per time step.

    History rows carry the observed positions with step indices ending at 0
    (the prediction anchor); prediction rows carry steps 1..P with the
    matching ground truth when it is available.  Times are seconds relative
    to the anchor.
    """
    rate = history.sample_rate_hz
    vid = history.vehicle_id
    rows = [OVERLAY_COLUMNS]

    n_hist = len(history)
    for i, (x, y) in enumerate(history.points):
        step = i - (n_hist - 1)
        rows.append(
            f"{vid},{step},{_fmt(step / rate)},,,{_fmt(x)},{_fmt(y)},history"
        )

    n_pred = 0 if prediction is None else len(prediction)
    for k in range(n_pred):
        x_p, y_p = prediction.points[k]
        if truth is not None and k < len(truth):
            x_t, y_t = truth.points[k]
            true_part = f"{_fmt(x_t)},{_fmt(y_t)}"
        else:
            true_part = ","
        step = k + 1
        rows.append(
            f"{vid},{step},{_fmt(step / rate)},{_fmt(x_p)},{_fmt(y_p)},{true_part},prediction"
        )
    return "\n".join(rows) + "\n"


def parse_overlay(text: str):
    """Read an overlay document back into (vehicle_id, history, prediction, truth) arrays.

    Truth entries are NaN where the overlay had no ground-truth value.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != OVERLAY_COLUMNS:
        raise DataError("not an overlay document (bad header)")
    vid = None
    hist, pred, truth, t_pred = [], [], [], []
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != 8:
            raise DataError(f"malformed overlay row: {ln!r}")
        vid = cells[0]
        phase = cells[7]
        if phase == "history":
            hist.append((float(cells[5]), float(cells[6])))
        elif phase == "prediction":
            pred.append((float(cells[3]), float(cells[4])))
            t_pred.append(float(cells[2]))
            if cells[5] == "" or cells[6] == "":
                truth.append((np.nan, np.nan))
            else:
                truth.append((float(cells[5]), float(cells[6])))
        else:
            raise DataError(f"unknown overlay phase {phase!r}")
    return (
        vid,
        np.asarray(hist, dtype=float).reshape(-1, 2),
        np.asarray(pred, dtype=float).reshape(-1, 2),
        np.asarray(truth, dtype=float).reshape(-1, 2),
        np.asarray(t_pred, dtype=float),
    )


def _fmt(value: float) -> str:
    return repr(float(value))
