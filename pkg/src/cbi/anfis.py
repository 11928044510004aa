"""First-order Sugeno ANFIS over RGB pixels with hybrid (LSE + gradient) training.

Inputs are divided by 255 before inference. Each rule fires with the product
of three Gaussian memberships; the output is the firing-strength weighted
average of linear rule consequents, rescaled to gray levels 0-255.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import MissingClass, ParseError, SingularSystem
from .samples import N_CLASSES, ClassSample, as_arrays

INPUT_SCALE = 255
WIDTH_FLOOR = 1e-3
STALL_EPOCHS = 10


def default_class_targets(n_classes: int = N_CLASSES) -> tuple[float, ...]:
    return tuple(float(round(255 * k / (n_classes - 1))) for k in range(n_classes))


@dataclass(frozen=True)
class MembershipFunction:
    """Gaussian membership over a 0-1 normalized channel."""

    center: float
    width: float

    def __call__(self, x):
        return np.exp(-0.5 * ((np.asarray(x, dtype=float) - self.center) / self.width) ** 2)


@dataclass(frozen=True)
class SugenoRule:
    premise: tuple[MembershipFunction, MembershipFunction, MembershipFunction]
    consequent: tuple[float, float, float, float]

    def __post_init__(self):
        if len(self.premise) != 3:
            raise ValueError("a rule needs exactly three premise functions")
        if len(self.consequent) != 4 or not all(math.isfinite(c) for c in self.consequent):
            raise ValueError("consequent must be four finite reals (j, k, l, z)")


@dataclass(frozen=True, eq=False)
class AnfisModel:
    """Immutable rule base stored as arrays.

    centers, widths: (R, 3) in normalized channel units.
    consequents: (R, 4) rows ``(j, k, l, z)`` acting on normalized inputs and
    producing normalized output (gray / 255).
    """

    centers: np.ndarray
    widths: np.ndarray
    consequents: np.ndarray
    class_targets: tuple[float, ...] = field(default_factory=default_class_targets)
    input_scale: int = INPUT_SCALE

    def __post_init__(self):
        for name in ("centers", "widths", "consequents"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.centers.shape[0]
        if n < 1 or self.centers.shape != (n, 3) or self.widths.shape != (n, 3):
            raise ValueError("centers and widths must both be (R, 3) with R >= 1")
        if self.consequents.shape != (n, 4):
            raise ValueError("consequents must be (R, 4)")
        if not (np.all(np.isfinite(self.centers)) and np.all(np.isfinite(self.consequents))):
            raise ValueError("non-finite model parameter")
        if not np.all(self.widths > 0):
            raise ValueError("widths must be positive")
        targets = tuple(float(t) for t in self.class_targets)
        if not targets or any(b <= a for a, b in zip(targets, targets[1:])):
            raise ValueError("class_targets must be strictly increasing")
        if targets[0] < 0 or targets[-1] > 255:
            raise ValueError("class_targets must lie in [0, 255]")
        object.__setattr__(self, "class_targets", targets)
        if self.input_scale != INPUT_SCALE:
            raise ValueError(f"input_scale is fixed at {INPUT_SCALE}")

    @property
    def n_rules(self) -> int:
        return self.centers.shape[0]

    @property
    def rules(self) -> list[SugenoRule]:
        return [
            SugenoRule(
                tuple(MembershipFunction(float(c), float(w)) for c, w in zip(cs, ws)),
                tuple(float(v) for v in q),
            )
            for cs, ws, q in zip(self.centers, self.widths, self.consequents)
        ]

    @classmethod
    def from_rules(cls, rules: Sequence[SugenoRule], class_targets=None) -> "AnfisModel":
        kwargs = {} if class_targets is None else {"class_targets": tuple(class_targets)}
        return cls(
            centers=[[mf.center for mf in r.premise] for r in rules],
            widths=[[mf.width for mf in r.premise] for r in rules],
            consequents=[list(r.consequent) for r in rules],
            **kwargs,
        )

    def replace(self, **changes) -> "AnfisModel":
        fields = dict(
            centers=self.centers,
            widths=self.widths,
            consequents=self.consequents,
            class_targets=self.class_targets,
        )
        fields.update(changes)
        return AnfisModel(**fields)

    def __eq__(self, other):
        if not isinstance(other, AnfisModel):
            return NotImplemented
        return (
            np.array_equal(self.centers, other.centers)
            and np.array_equal(self.widths, other.widths)
            and np.array_equal(self.consequents, other.consequents)
            and self.class_targets == other.class_targets
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.01
    ridge: float = 1e-8
    seed: int = 0
    convergence_delta: float = 1e-6

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ValueError("learning_rate must be finite and > 0")
        if not (math.isfinite(self.ridge) and self.ridge >= 0):
            raise ValueError("ridge must be finite and >= 0")
        if not (math.isfinite(self.convergence_delta) and self.convergence_delta >= 0):
            raise ValueError("convergence_delta must be finite and >= 0")


# --------------------------------------------------------------------------- #
# forward pass
# --------------------------------------------------------------------------- #


class _Forward(NamedTuple):
    w: np.ndarray      # (N, R) firing strengths
    total: np.ndarray  # (N,)
    wbar: np.ndarray   # (N, R) normalized strengths, uniform where total == 0
    f: np.ndarray      # (N, R) rule outputs, normalized units
    out: np.ndarray    # (N,) normalized output


def _forward(model: AnfisModel, xn: np.ndarray) -> _Forward:
    # Per-rule loops keep the floating-point summation order fixed regardless of
    # batch size, which the tiled filter relies on for bit-identical output.
    n, r = xn.shape[0], model.n_rules
    c, s, q = model.centers, model.widths, model.consequents
    w = np.empty((n, r))
    f = np.empty((n, r))
    for i in range(r):
        z = ((xn[:, 0] - c[i, 0]) / s[i, 0]) ** 2
        z = z + ((xn[:, 1] - c[i, 1]) / s[i, 1]) ** 2
        z = z + ((xn[:, 2] - c[i, 2]) / s[i, 2]) ** 2
        w[:, i] = np.exp(-0.5 * z)
        f[:, i] = q[i, 0] * xn[:, 0] + q[i, 1] * xn[:, 1] + q[i, 2] * xn[:, 2] + q[i, 3]
    total = w[:, 0].copy()
    for i in range(1, r):
        total = total + w[:, i]
    dead = total == 0
    safe = np.where(dead, 1.0, total)
    wbar = w / safe[:, None]
    wbar[dead] = 1.0 / r
    out = wbar[:, 0] * f[:, 0]
    for i in range(1, r):
        out = out + wbar[:, i] * f[:, i]
    return _Forward(w, total, wbar, f, out)


def evaluate_batch(model: AnfisModel, rgb) -> np.ndarray:
    """Gray-level outputs for an (N, 3) array of 0-255 pixels."""
    xn = np.asarray(rgb, dtype=np.float64).reshape(-1, 3) / model.input_scale
    return _forward(model, xn).out * 255.0


def evaluate(model: AnfisModel, pixel) -> float:
    return float(evaluate_batch(model, [pixel])[0])


def classify_outputs(model: AnfisModel, outputs: np.ndarray) -> np.ndarray:
    """Nearest class target for each output; ties go to the lower class."""
    targets = np.asarray(model.class_targets)
    dist = np.abs(np.asarray(outputs, dtype=np.float64)[..., None] - targets)
    return np.argmin(dist, axis=-1)  # argmin returns the first minimum


def classify_batch(model: AnfisModel, rgb) -> np.ndarray:
    return classify_outputs(model, evaluate_batch(model, rgb))


def classify(model: AnfisModel, pixel) -> int:
    return int(classify_batch(model, [pixel])[0])


# --------------------------------------------------------------------------- #
# training
# --------------------------------------------------------------------------- #


def _training_arrays(model: AnfisModel, samples: Sequence[ClassSample]):
    rgb, cls = as_arrays(samples)
    if cls.size and cls.max() >= len(model.class_targets):
        raise ValueError(f"class id {cls.max()} has no target")
    targets = np.asarray(model.class_targets)[cls]
    return rgb / model.input_scale, targets


def sse(model: AnfisModel, samples: Sequence[ClassSample]) -> float:
    """Sum of squared errors in gray levels."""
    xn, t = _training_arrays(model, samples)
    err = _forward(model, xn).out * 255.0 - t
    return float(np.sum(err * err))


def rmse(model: AnfisModel, samples: Sequence[ClassSample]) -> float:
    return math.sqrt(sse(model, samples) / len(samples))


def initial_model(samples: Sequence[ClassSample], n_classes: int = N_CLASSES) -> AnfisModel:
    """One rule per class, premises at the class mean with the class std as width."""
    rgb, cls = as_arrays(samples)
    _require_classes(cls, n_classes)
    xn = rgb / INPUT_SCALE
    centers = np.array([xn[cls == k].mean(axis=0) for k in range(n_classes)])
    widths = np.array([xn[cls == k].std(axis=0) for k in range(n_classes)])
    return AnfisModel(
        centers=centers,
        widths=np.maximum(widths, WIDTH_FLOOR),
        consequents=np.zeros((n_classes, 4)),
        class_targets=default_class_targets(n_classes),
    )


def _require_classes(cls: np.ndarray, n_classes: int) -> None:
    missing = set(range(n_classes)) - set(int(c) for c in cls)
    if missing:
        raise MissingClass(missing)


def lse_consequents(model: AnfisModel, samples: Sequence[ClassSample], ridge: float = 1e-8) -> AnfisModel:
    """Solve all consequents jointly with premises fixed (ridge least squares)."""
    xn, t = _training_arrays(model, samples)
    return _lse(model, xn, t / 255.0, ridge)


def _lse(model: AnfisModel, xn: np.ndarray, tn: np.ndarray, ridge: float) -> AnfisModel:
    fw = _forward(model, xn)
    ones = np.ones((xn.shape[0], 1))
    basis = np.hstack([xn, ones])  # (N, 4)
    a = (fw.wbar[:, :, None] * basis[:, None, :]).reshape(xn.shape[0], -1)
    n_params = a.shape[1]
    if ridge == 0:
        sol, _, rank, _ = np.linalg.lstsq(a, tn, rcond=None)
        if rank < n_params:
            raise SingularSystem(f"consequent system rank {rank} < {n_params} with ridge=0")
    else:
        gram = a.T @ a + ridge * np.eye(n_params)
        sol = np.linalg.solve(gram, a.T @ tn)
    return model.replace(consequents=sol.reshape(model.n_rules, 4))


class PremiseGradient(NamedTuple):
    centers: np.ndarray
    widths: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.centers.ravel(), self.widths.ravel()])


def premise_gradient(model: AnfisModel, samples: Sequence[ClassSample]) -> PremiseGradient:
    """Analytic gradient of the gray-level SSE w.r.t. premise centers and widths."""
    xn, t = _training_arrays(model, samples)
    return _premise_gradient(model, xn, t)


def _premise_gradient(model: AnfisModel, xn: np.ndarray, t: np.ndarray) -> PremiseGradient:
    fw = _forward(model, xn)
    err = fw.out * 255.0 - t
    # dE/dw_i * w_i = 2 e * 255 * wbar_i (f_i - out); zero where no rule fires
    live = fw.total > 0
    k = 2.0 * err[:, None] * 255.0 * fw.wbar * (fw.f - fw.out[:, None])
    k[~live] = 0.0
    diff = xn[:, None, :] - model.centers[None, :, :]  # (N, R, 3)
    s = model.widths[None, :, :]
    g_c = np.sum(k[:, :, None] * diff / s**2, axis=0)
    g_s = np.sum(k[:, :, None] * diff**2 / s**3, axis=0)
    return PremiseGradient(g_c, g_s)


class TrainResult(NamedTuple):
    model: AnfisModel
    rmse_trace: list[float]  # per-epoch training RMSE (gray levels) after the LSE pass
    initial_rmse: float


def _adapt_step(step: float, trace: Sequence[float]) -> float:
    # classic ANFIS step rule: grow 10% after four straight decreases, shrink 10%
    # after two consecutive up/down oscillations.
    if len(trace) < 5:
        return step
    d = np.diff(trace[-5:])
    if np.all(d < 0):
        return step * 1.1
    if d[-1] * d[-2] < 0 and d[-2] * d[-3] < 0:
        return step * 0.9
    return step


def train(
    samples: Sequence[ClassSample],
    config: TrainConfig = TrainConfig(),
    init: AnfisModel | None = None,
    on_epoch: Callable[[int, AnfisModel, float], None] | None = None,
) -> TrainResult:
    """Hybrid ANFIS training.

    Each epoch solves the consequents by least squares with premises fixed,
    records the training RMSE, then moves all centers and widths a distance
    ``step`` (normalized parameter units) against the SSE gradient. The step
    starts at ``config.learning_rate`` and adapts to the RMSE trace. At least
    one LSE pass always runs, even with ``epochs=0``, and the model with the
    lowest recorded RMSE is returned.

    Full-batch updates consume no randomness; ``config.seed`` is recorded for
    provenance only. ``on_epoch(epoch, model, rmse)`` sees the model right
    after each consequent solve.
    """
    if init is None:
        init = initial_model(samples)
    rgb, cls = as_arrays(samples)
    _require_classes(cls, len(init.class_targets))
    xn = rgb / INPUT_SCALE
    t = np.asarray(init.class_targets)[cls]
    n = len(samples)

    def model_rmse(m):
        err = _forward(m, xn).out * 255.0 - t
        return math.sqrt(float(np.sum(err * err)) / n)

    initial = model_rmse(init)
    model = init
    best, best_rmse = None, math.inf
    trace: list[float] = []
    stall = 0
    step = config.learning_rate
    for epoch in range(max(config.epochs, 1)):
        model = _lse(model, xn, t / 255.0, config.ridge)
        r = model_rmse(model)
        if on_epoch is not None:
            on_epoch(epoch, model, r)
        if trace and trace[-1] - r < config.convergence_delta:
            stall += 1
        else:
            stall = 0
        trace.append(r)
        if r < best_rmse:
            best, best_rmse = model, r
        if stall >= STALL_EPOCHS or epoch >= config.epochs - 1:
            break
        g = _premise_gradient(model, xn, t)
        norm = float(np.linalg.norm(g.flat()))
        if norm == 0.0:
            break
        step = _adapt_step(step, trace)
        model = model.replace(
            centers=np.clip(model.centers - step * g.centers / norm, 0.0, 1.0),
            widths=np.maximum(model.widths - step * g.widths / norm, WIDTH_FLOOR),
        )
    if initial < best_rmse:
        best = init
    return TrainResult(best, trace, initial)


# --------------------------------------------------------------------------- #
# JSON model format
# --------------------------------------------------------------------------- #


def serialize_model(model: AnfisModel) -> str:
    doc = {
        "input_scale": model.input_scale,
        "class_targets": list(model.class_targets),
        "rules": [
            {
                "premise": [{"center": float(c), "width": float(w)} for c, w in zip(cs, ws)],
                "consequent": [float(v) for v in q],
            }
            for cs, ws, q in zip(model.centers, model.widths, model.consequents)
        ],
    }
    # json writes floats with repr(), which round-trips doubles exactly
    return json.dumps(doc, indent=1) + "\n"


def _number(value, field):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ParseError(f"expected a finite number, got {value!r}", field=field)
    return float(value)


def load_model(text: str) -> AnfisModel:
    try:
        doc = json.loads(text, parse_constant=lambda c: c)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg} (column {exc.colno})", row=exc.lineno) from None
    if not isinstance(doc, dict):
        raise ParseError("model document must be a JSON object")
    for key in ("input_scale", "class_targets", "rules"):
        if key not in doc:
            raise ParseError("missing required field", field=key)
    if doc["input_scale"] != INPUT_SCALE:
        raise ParseError(f"must be {INPUT_SCALE}", field="input_scale")
    targets = doc["class_targets"]
    if not isinstance(targets, list) or not targets:
        raise ParseError("expected a non-empty list", field="class_targets")
    targets = [_number(v, f"class_targets[{i}]") for i, v in enumerate(targets)]
    rules = doc["rules"]
    if not isinstance(rules, list) or not rules:
        raise ParseError("expected a non-empty list", field="rules")
    centers, widths, consequents = [], [], []
    for i, rule in enumerate(rules):
        where = f"rules[{i}]"
        if not isinstance(rule, dict):
            raise ParseError("expected an object", field=where)
        premise = rule.get("premise")
        if not isinstance(premise, list) or len(premise) != 3:
            raise ParseError("expected 3 membership functions", field=f"{where}.premise")
        row_c, row_w = [], []
        for j, mf in enumerate(premise):
            if not isinstance(mf, dict) or "center" not in mf or "width" not in mf:
                raise ParseError("expected {center, width}", field=f"{where}.premise[{j}]")
            row_c.append(_number(mf["center"], f"{where}.premise[{j}].center"))
            w = _number(mf["width"], f"{where}.premise[{j}].width")
            if w <= 0:
                raise ParseError("width must be > 0", field=f"{where}.premise[{j}].width")
            row_w.append(w)
        cq = rule.get("consequent")
        if not isinstance(cq, list) or len(cq) != 4:
            raise ParseError("expected [j, k, l, z]", field=f"{where}.consequent")
        centers.append(row_c)
        widths.append(row_w)
        consequents.append([_number(v, f"{where}.consequent[{k}]") for k, v in enumerate(cq)])
    try:
        return AnfisModel(centers, widths, consequents, tuple(targets))
    except ValueError as exc:
        raise ParseError(str(exc), field="class_targets") from None
