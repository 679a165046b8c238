"""Content/Gram losses, their gradients, and the iterative synthesis loop.

Layer matrices stack each feature map as one row over flattened spatial
positions; Gram matrices and loss values accumulate in float64 to keep the
large sums stable, while cotangents are handed back to the network as
float32.

The update adds step * G where G is the *negative* loss gradient, so the
loop descends. With backtracking line search enabled the step is halved (at
most ``max_halvings`` times) until the loss does not increase, which makes
the recorded loss history non-increasing exactly; on a clean first-try
acceptance the step doubles so the schedule adapts in both directions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .network import ActivationTrace, NetworkSpec, WeightStore, backward_to_input, forward
from .tensor import Tensor


class LossConfigError(ValueError):
    pass


class DivergenceError(RuntimeError):
    """Non-finite loss during synthesis; carries the diagnostic state."""

    def __init__(self, message, state):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class LossConfig:
    """Layer selections with per-layer weights, plus the global mix.

    content_layers / style_layers map layer name -> w_l. alpha and beta weigh
    the content and style sums; k_c and k_s are the loss normalizers (kept at
    1 by default, i.e. folded into alpha and beta).
    """

    content_layers: dict
    style_layers: dict
    alpha: float = 1.0
    beta: float = 1000.0
    k_c: float = 1.0
    k_s: float = 1.0

    def __post_init__(self):
        if not self.content_layers and not self.style_layers:
            raise LossConfigError("select at least one content or style layer")
        for table in (self.content_layers, self.style_layers):
            for name, w in table.items():
                if w < 0:
                    raise LossConfigError(f"layer weight for {name!r} must be >= 0, got {w}")
        if self.alpha < 0 or self.beta < 0:
            raise LossConfigError("alpha and beta must be >= 0")
        if self.k_c <= 0 or self.k_s <= 0:
            raise LossConfigError("k_c and k_s must be > 0")

    def capture_set(self) -> set:
        return set(self.content_layers) | set(self.style_layers)


def default_loss_config(spec: NetworkSpec, alpha: float = 1.0, beta: float = 1000.0) -> LossConfig:
    """Style on the first conv of each block, content on conv4_2 for the
    VGG16 preset; for other stacks, style uniformly over all convs and
    content summed over all convs (shallow terms keep deep rectifier units
    from going permanently dark during reconstruction)."""
    conv_names = [l.name for l in spec.conv_layers()]
    vgg_style = ["conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1"]
    if all(n in conv_names for n in vgg_style) and "conv4_2" in conv_names:
        style = {n: 1.0 / len(vgg_style) for n in vgg_style}
        content = {"conv4_2": 1.0}
    else:
        style = {n: 1.0 / len(conv_names) for n in conv_names}
        content = {n: 1.0 for n in conv_names}
    return LossConfig(content_layers=content, style_layers=style, alpha=alpha, beta=beta)


def to_layer_matrix(activation: Tensor) -> np.ndarray:
    """[C,H,W] feature map -> [N, M] matrix, row c = flattened channel c."""
    if activation.ndim != 3:
        raise ValueError(f"expected [C,H,W], got {tuple(activation.shape)}")
    c = activation.shape[0]
    return activation.reshape(c, -1)


def from_layer_matrix(matrix: np.ndarray, shape) -> Tensor:
    """Inverse reshaping of to_layer_matrix."""
    return np.ascontiguousarray(matrix, dtype=np.float32).reshape(shape)


def gram(matrix: np.ndarray) -> np.ndarray:
    """G = F F^T with float64 accumulation."""
    f = np.asarray(matrix, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError(f"layer matrix must be 2-D, got rank {f.ndim}")
    return f @ f.T


def style_loss_layer(matrix: np.ndarray, target_gram: np.ndarray):
    """Loss 1/(4 N^2 M^2) * sum (G - A)^2 and its gradient (G - A) F / (N^2 M^2)."""
    f = np.asarray(matrix, dtype=np.float64)
    a = np.asarray(target_gram, dtype=np.float64)
    n, m = f.shape
    if a.shape != (n, n):
        raise ValueError(f"target Gram must be {(n, n)}, got {a.shape}")
    diff = f @ f.T - a
    value = float(np.sum(diff * diff)) / (4.0 * n * n * m * m)
    grad = (diff @ f) / (n * n * m * m)
    return value, grad


def content_loss_layer(matrix: np.ndarray, target: np.ndarray):
    """Loss 1/2 * sum (F - P)^2 and its gradient F - P."""
    f = np.asarray(matrix, dtype=np.float64)
    p = np.asarray(target, dtype=np.float64)
    if f.shape != p.shape:
        raise ValueError(f"content shapes differ: {f.shape} vs {p.shape}")
    diff = f - p
    return 0.5 * float(np.sum(diff * diff)), diff


def mmd_second_order(matrix: np.ndarray, other: np.ndarray) -> float:
    """Squared MMD of the column samples under the kernel k(x,y) = (x.y)^2."""
    f = np.asarray(matrix, dtype=np.float64)
    s = np.asarray(other, dtype=np.float64)
    if f.shape[0] != s.shape[0]:
        raise ValueError(f"row counts differ: {f.shape[0]} vs {s.shape[0]}")
    if f.shape[1] != s.shape[1]:
        raise ValueError(f"column counts differ: {f.shape[1]} vs {s.shape[1]}")
    m = f.shape[1]
    kff = float(np.sum((f.T @ f) ** 2))
    kss = float(np.sum((s.T @ s) ** 2))
    kfs = float(np.sum((f.T @ s) ** 2))
    return (kff + kss - 2.0 * kfs) / (m * m)


class LossValue(NamedTuple):
    total: float
    content: float
    style: float
    cotangents: dict  # layer name -> float32 [C,H,W]


def _targets(content_trace, style_trace, cfg: LossConfig):
    content = {}
    for name in cfg.content_layers:
        if content_trace is None or name not in content_trace.captured:
            raise LossConfigError(f"content trace is missing layer {name!r}")
        content[name] = to_layer_matrix(content_trace[name]).astype(np.float64)
    style = {}
    for name in cfg.style_layers:
        if style_trace is None or name not in style_trace.captured:
            raise LossConfigError(f"style trace is missing layer {name!r}")
        style[name] = gram(to_layer_matrix(style_trace[name]))
    return content, style


def _evaluate(noise_trace: ActivationTrace, content_targets, style_grams, cfg: LossConfig) -> LossValue:
    content_sum = 0.0
    style_sum = 0.0
    grads: dict = {}

    def add_grad(name, g):
        if name in grads:
            grads[name] = grads[name] + g
        else:
            grads[name] = g

    for name, target in content_targets.items():
        if name not in noise_trace.captured:
            raise LossConfigError(f"trace is missing content layer {name!r}")
        f = to_layer_matrix(noise_trace[name])
        value, grad = content_loss_layer(f, target)
        w = cfg.content_layers[name]
        content_sum += w * value
        add_grad(name, (cfg.alpha * w / cfg.k_c) * grad)
    for name, target_gram in style_grams.items():
        if name not in noise_trace.captured:
            raise LossConfigError(f"trace is missing style layer {name!r}")
        f = to_layer_matrix(noise_trace[name])
        value, grad = style_loss_layer(f, target_gram)
        w = cfg.style_layers[name]
        style_sum += w * value
        add_grad(name, (cfg.beta * w / cfg.k_s) * grad)

    total = (cfg.alpha / cfg.k_c) * content_sum + (cfg.beta / cfg.k_s) * style_sum
    cotangents = {
        name: from_layer_matrix(g, noise_trace[name].shape) for name, g in grads.items()
    }
    return LossValue(total, content_sum, style_sum, cotangents)


def total_loss(noise_trace: ActivationTrace, content_trace, style_trace, cfg: LossConfig) -> LossValue:
    """Combined weighted loss over the configured layers, with per-layer
    cotangents ready for backward_to_input."""
    content_targets, style_grams = _targets(content_trace, style_trace, cfg)
    return _evaluate(noise_trace, content_targets, style_grams, cfg)


@dataclass
class OptimizerParams:
    max_iters: int = 500
    step: float = 1.0
    line_search: bool = True
    max_halvings: int = 20
    tol: float = 1e-8
    tol_window: int = 25
    seed: int = 0
    init_from_content: bool = False
    noise_amplitude: float = 50.0
    clamp_bounds: tuple | None = None  # per-channel (low[3], high[3]) or None


@dataclass
class SynthesisState:
    image: Tensor
    iteration: int
    step: float
    loss_history: list  # one (total, content, style) row per completed step
    initial_loss: tuple
    seed: int

    def totals(self) -> np.ndarray:
        return np.array([row[0] for row in self.loss_history])


def _clamp(x: Tensor, bounds) -> Tensor:
    if bounds is None:
        return x
    lo, hi = bounds
    lo = np.asarray(lo, dtype=np.float32).reshape(-1, 1, 1)
    hi = np.asarray(hi, dtype=np.float32).reshape(-1, 1, 1)
    return np.clip(x, lo, hi)


def synthesize(
    spec: NetworkSpec,
    weights: WeightStore,
    content: Tensor | None,
    style: Tensor | None,
    cfg: LossConfig,
    opt: OptimizerParams | None = None,
):
    """Descend the combined loss from seeded white noise; returns (image, state).

    At least one of content/style must be given: content-only reconstructs
    the target through the chosen layers, style-only synthesizes texture from
    Gram statistics alone.
    """
    opt = opt or OptimizerParams()
    if content is None and style is None:
        raise ValueError("need a content image, a style image, or both")
    if cfg.content_layers and cfg.alpha > 0 and content is None:
        raise LossConfigError("config selects content layers but no content image given")
    if cfg.style_layers and cfg.beta > 0 and style is None:
        raise LossConfigError("config selects style layers but no style image given")

    capture = cfg.capture_set()
    content_trace = forward(spec, weights, content, capture) if content is not None else None
    style_trace = forward(spec, weights, style, capture) if style is not None else None
    content_targets, style_grams = _targets(content_trace, style_trace, cfg)

    reference = content if content is not None else style
    if opt.init_from_content:
        if content is None:
            raise ValueError("init_from_content requires a content image")
        x = content.astype(np.float32).copy()
    else:
        rng = np.random.default_rng(opt.seed)
        x = rng.uniform(-opt.noise_amplitude, opt.noise_amplitude, size=reference.shape).astype(np.float32)
    x = _clamp(x, opt.clamp_bounds)

    def evaluate(img):
        trace = forward(spec, weights, img, capture)
        return trace, _evaluate(trace, content_targets, style_grams, cfg)

    trace, loss = evaluate(x)
    state = SynthesisState(
        image=x,
        iteration=0,
        step=opt.step,
        loss_history=[],
        initial_loss=(loss.total, loss.content, loss.style),
        seed=opt.seed,
    )
    if not np.isfinite(loss.total):
        raise DivergenceError(f"initial loss is {loss.total}", state)

    for _ in range(opt.max_iters):
        grad = backward_to_input(spec, weights, trace, loss.cotangents)
        direction = -grad  # G_L in the update is the negative loss gradient

        if opt.line_search:
            trial = state.step
            accepted = None
            for halving in range(opt.max_halvings + 1):
                candidate = _clamp(x + np.float32(trial) * direction, opt.clamp_bounds)
                cand_trace, cand_loss = evaluate(candidate)
                if cand_loss.total <= loss.total:
                    accepted = (candidate, cand_trace, cand_loss, halving)
                    break
                trial *= 0.5
            if accepted is None:
                # No decrease found: hold position, keep the shrunken step.
                state.step = trial
                cand_loss = loss
            else:
                x, trace, loss, halvings = accepted
                state.step = trial * 2.0 if halvings == 0 else trial
                cand_loss = loss
        else:
            x = _clamp(x + np.float32(state.step) * direction, opt.clamp_bounds)
            trace, loss = evaluate(x)
            cand_loss = loss

        state.image = x
        state.iteration += 1
        state.loss_history.append((cand_loss.total, cand_loss.content, cand_loss.style))
        if not np.isfinite(cand_loss.total):
            raise DivergenceError(f"loss diverged at iteration {state.iteration}", state)

        if len(state.loss_history) > opt.tol_window:
            old = state.loss_history[-opt.tol_window - 1][0]
            new = state.loss_history[-1][0]
            if (old - new) / max(abs(old), 1e-30) < opt.tol:
                break

    return state.image, state


def loss_history_csv(state: SynthesisState) -> str:
    """Loss history as CSV text: iteration, total, content, style."""
    lines = ["iteration,total,content,style"]
    rows = [(0, *state.initial_loss)]
    rows += [(i + 1, *row) for i, row in enumerate(state.loss_history)]
    for it, total, content, style in rows:
        lines.append(f"{it},{total!r},{content!r},{style!r}")
    return "\n".join(lines) + "\n"


def write_loss_csv(path, state: SynthesisState):
    from .image_io import atomic_write_bytes

    atomic_write_bytes(path, loss_history_csv(state).encode("ascii"))
