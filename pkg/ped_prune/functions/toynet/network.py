"""
Toy skip-connection network with hand-written backpropagation.

Each skip-unit f_l is a two-layer perceptron T_l = W2 act(W1 u + b1) + b2.

residual:  U_l = alpha_l T_l + U_{l-1}                 (width w everywhere)
dense:     U_l = concat(U_{l-1}, alpha_l T_l)          (T_l has width g)

U_0 is a linear stem and the head is a linear map of U_L. Pruned units are
skipped entirely; in the dense variant they drop out of the concatenation,
so later units and the head only read the rows of their weights that belong
to active pieces. Weights are stored at full size so a unit's slices survive
pruning of earlier units unchanged.
"""

import logging
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from config import get_settings
from ped_prune.errors import ConfigError, ShapeMismatch
from ped_prune.types import Batch, FeatureMatrix, PruningPolicy, SkipNetConfig

logger = logging.getLogger("ped-prune.toynet")

settings = get_settings()

Inputs = Union[Batch, np.ndarray]


class UnitParameters(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


class SkipNetwork(BaseModel):
    """Weights of the toy network plus the policy it currently runs under."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: SkipNetConfig
    stem_w: np.ndarray
    stem_b: np.ndarray
    units: List[UnitParameters]
    head_w: np.ndarray
    head_b: np.ndarray
    policy: PruningPolicy

    def named_parameters(self) -> List[Tuple[str, np.ndarray]]:
        """Every stored parameter array in canonical order (stem, units, head)."""
        named = [("stem.w", self.stem_w), ("stem.b", self.stem_b)]
        for index, unit in enumerate(self.units):
            named += [
                (f"unit{index}.w1", unit.w1),
                (f"unit{index}.b1", unit.b1),
                (f"unit{index}.w2", unit.w2),
                (f"unit{index}.b2", unit.b2),
            ]
        named += [("head.w", self.head_w), ("head.b", self.head_b)]
        return named


class UnitCache(NamedTuple):
    inputs: np.ndarray
    rows: Optional[np.ndarray]
    pre: np.ndarray
    hidden: np.ndarray


class ForwardTrace(NamedTuple):
    logits: np.ndarray
    feature_maps: List[Optional[np.ndarray]]
    unit_outputs: List[np.ndarray]
    caches: List[Optional[UnitCache]]
    head_rows: Optional[np.ndarray]


# ============================================================================
# SHAPES AND INITIALIZATION
# ============================================================================

def head_width(cfg: SkipNetConfig) -> int:
    """Stored head input width: w for residual, w + g*L for dense."""
    if cfg.composition == "residual":
        return cfg.width
    return cfg.width + cfg.growth * cfg.units


def unit_input_width(cfg: SkipNetConfig, unit: int) -> int:
    """Stored input width of unit `unit` (0-based)."""
    if cfg.composition == "residual":
        return cfg.width
    return cfg.width + cfg.growth * unit


def parameter_shapes(cfg: SkipNetConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    branch = cfg.width if cfg.composition == "residual" else cfg.growth
    shapes = [("stem.w", (cfg.input_dim, cfg.width)), ("stem.b", (cfg.width,))]
    for index in range(cfg.units):
        fan_in = unit_input_width(cfg, index)
        shapes += [
            (f"unit{index}.w1", (fan_in, branch)),
            (f"unit{index}.b1", (branch,)),
            (f"unit{index}.w2", (branch, branch)),
            (f"unit{index}.b2", (branch,)),
        ]
    shapes += [("head.w", (head_width(cfg), cfg.classes)), ("head.b", (cfg.classes,))]
    return shapes


def assemble_network(cfg: SkipNetConfig, policy: PruningPolicy, arrays: Dict[str, np.ndarray]) -> SkipNetwork:
    """Build a SkipNetwork from named arrays laid out as parameter_shapes(cfg)."""
    if policy.n_units != cfg.units:
        raise ShapeMismatch(f"policy covers {policy.n_units} units, network has {cfg.units}")
    for name, shape in parameter_shapes(cfg):
        if name not in arrays or tuple(arrays[name].shape) != shape:
            got = None if name not in arrays else tuple(arrays[name].shape)
            raise ShapeMismatch(f"parameter {name} should be {shape}, got {got}")
    units = [
        UnitParameters(
            w1=arrays[f"unit{index}.w1"],
            b1=arrays[f"unit{index}.b1"],
            w2=arrays[f"unit{index}.w2"],
            b2=arrays[f"unit{index}.b2"],
        )
        for index in range(cfg.units)
    ]
    return SkipNetwork(
        config=cfg,
        stem_w=arrays["stem.w"],
        stem_b=arrays["stem.b"],
        units=units,
        head_w=arrays["head.w"],
        head_b=arrays["head.b"],
        policy=policy,
    )


def init_network(cfg: SkipNetConfig) -> SkipNetwork:
    """
    Seeded network with every unit active.

    Each weight and bias is drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
    parameters drawn in canonical order from one generator seeded by cfg.seed.
    """
    rng = np.random.default_rng(cfg.seed)
    arrays = {}
    fan_in = cfg.input_dim
    for name, shape in parameter_shapes(cfg):
        # a bias shares the fan-in of the weight listed just before it
        if len(shape) == 2:
            fan_in = shape[0]
        scale = 1.0 / np.sqrt(fan_in)
        arrays[name] = rng.uniform(-scale, scale, size=shape)
    return assemble_network(cfg, PruningPolicy.all_active(cfg.units), arrays)


# ============================================================================
# FORWARD
# ============================================================================

def _activate(pre: np.ndarray, cfg: SkipNetConfig) -> np.ndarray:
    return np.maximum(pre, 0.0) if cfg.activation == "relu" else pre


def _activation_grad(pre: np.ndarray, cfg: SkipNetConfig) -> np.ndarray:
    return (pre > 0.0).astype(np.float64) if cfg.activation == "relu" else np.ones_like(pre)


def _piece_width(cfg: SkipNetConfig, piece: int) -> int:
    return cfg.width if piece == 0 else cfg.growth


def _piece_rows(cfg: SkipNetConfig, pieces: List[int]) -> np.ndarray:
    """Stored rows of the dense concatenation occupied by `pieces`.

    Piece 0 is the stem output; piece u + 1 is the feature map of unit u.
    """
    spans = []
    for piece in pieces:
        offset = 0 if piece == 0 else cfg.width + cfg.growth * (piece - 1)
        spans.append(np.arange(offset, offset + _piece_width(cfg, piece)))
    return np.concatenate(spans)


def _as_inputs(net: SkipNetwork, x: Inputs) -> np.ndarray:
    inputs = x.inputs if isinstance(x, Batch) else np.asarray(x, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != net.config.input_dim:
        raise ShapeMismatch(f"inputs must be m x {net.config.input_dim}, got {inputs.shape}")
    return inputs


def forward(net: SkipNetwork, x: Inputs, policy: Optional[PruningPolicy] = None) -> ForwardTrace:
    """
    Run the network under `policy` (default: the network's own).

    Returns:
        ForwardTrace with logits, feature maps T_1..T_L (None for pruned
        units; recorded before masking), unit outputs U_0..U_L and the
        caches backpropagation needs
    """
    cfg = net.config
    policy = policy or net.policy
    if policy.n_units != cfg.units:
        raise ShapeMismatch(f"policy covers {policy.n_units} units, network has {cfg.units}")
    inputs = _as_inputs(net, x)

    u = inputs @ net.stem_w + net.stem_b
    outputs = [u]
    maps: List[Optional[np.ndarray]] = []
    caches: List[Optional[UnitCache]] = []
    pieces = [0]

    for index, unit in enumerate(net.units):
        if not policy.is_active(index):
            maps.append(None)
            caches.append(None)
            outputs.append(u)
            continue
        rows = None if cfg.composition == "residual" else _piece_rows(cfg, pieces)
        w1 = unit.w1 if rows is None else unit.w1[rows]
        pre = u @ w1 + unit.b1
        hidden = _activate(pre, cfg)
        t = hidden @ unit.w2 + unit.b2
        caches.append(UnitCache(u, rows, pre, hidden))
        maps.append(t)
        if cfg.composition == "residual":
            u = u + t
        else:
            u = np.concatenate([u, t], axis=1)
            pieces.append(index + 1)
        outputs.append(u)

    head_rows = None if cfg.composition == "residual" else _piece_rows(cfg, pieces)
    head_w = net.head_w if head_rows is None else net.head_w[head_rows]
    logits = u @ head_w + net.head_b
    return ForwardTrace(logits, maps, outputs, caches, head_rows)


def predict(net: SkipNetwork, x: Inputs) -> np.ndarray:
    """Predicted 1-based labels."""
    return np.argmax(forward(net, x).logits, axis=1) + 1


def accuracy(net: SkipNetwork, batch: Batch) -> float:
    return float(np.mean(predict(net, batch) == batch.targets))


def extract_feature_maps(net: SkipNetwork, data: Inputs, policy: Optional[PruningPolicy] = None) -> List[FeatureMatrix]:
    """One n x width feature matrix per ACTIVE unit, rows in data order."""
    trace = forward(net, data, policy)
    return [FeatureMatrix(data=t) for t in trace.feature_maps if t is not None]


# ============================================================================
# LOSS AND BACKPROPAGATION
# ============================================================================

def _softmax_cross_entropy(logits: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    m, classes = logits.shape
    if targets.max() > classes:
        raise ShapeMismatch(f"target {targets.max()} exceeds {classes} classes")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    picked = np.arange(m), targets - 1
    loss = float(np.mean(log_norm - shifted[picked]))
    dlogits = np.exp(shifted - log_norm[:, None])
    dlogits[picked] -= 1.0
    return loss, dlogits / m


def loss(net: SkipNetwork, batch: Batch) -> float:
    """Mean softmax cross-entropy of `batch`."""
    value, _ = _softmax_cross_entropy(forward(net, batch).logits, batch.targets)
    return value


def loss_and_gradients(net: SkipNetwork, inputs: np.ndarray, targets: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Mean cross-entropy and its gradient for every stored parameter.

    Gradients of pruned units (and of dense weight rows that read pruned
    pieces) are exactly zero.
    """
    cfg = net.config
    inputs = _as_inputs(net, inputs)
    trace = forward(net, inputs)
    value, dlogits = _softmax_cross_entropy(trace.logits, np.asarray(targets))
    grads = {name: np.zeros_like(arr) for name, arr in net.named_parameters()}
    final = trace.unit_outputs[-1]

    grads["head.b"] = dlogits.sum(axis=0)
    if cfg.composition == "residual":
        grads["head.w"] = final.T @ dlogits
        du = dlogits @ net.head_w.T
        for index in reversed(range(cfg.units)):
            cache = trace.caches[index]
            if cache is None:
                continue
            dinputs = _unit_backward(net, index, cache, du, grads)
            du = du + dinputs
        dstem = du
    else:
        grads["head.w"][trace.head_rows] = final.T @ dlogits
        active = [index for index in range(cfg.units) if trace.caches[index] is not None]
        dpieces = _split_pieces(cfg, [0] + [a + 1 for a in active], dlogits @ net.head_w[trace.head_rows].T)
        for index in reversed(active):
            cache = trace.caches[index]
            dinputs = _unit_backward(net, index, cache, dpieces[index + 1], grads)
            inputs_pieces = [0] + [a + 1 for a in active if a < index]
            for piece, grad in _split_pieces(cfg, inputs_pieces, dinputs).items():
                dpieces[piece] = dpieces[piece] + grad
        dstem = dpieces[0]

    grads["stem.w"] = inputs.T @ dstem
    grads["stem.b"] = dstem.sum(axis=0)
    return value, grads


def _split_pieces(cfg: SkipNetConfig, pieces: List[int], grad: np.ndarray) -> Dict[int, np.ndarray]:
    widths = np.cumsum([_piece_width(cfg, piece) for piece in pieces])[:-1]
    return dict(zip(pieces, np.split(grad, widths, axis=1)))


def _unit_backward(net: SkipNetwork, index: int, cache: UnitCache, dt: np.ndarray, grads: Dict[str, np.ndarray]) -> np.ndarray:
    """Fill gradients of unit `index` and return the gradient w.r.t. its input."""
    unit = net.units[index]
    grads[f"unit{index}.w2"] = cache.hidden.T @ dt
    grads[f"unit{index}.b2"] = dt.sum(axis=0)
    dpre = (dt @ unit.w2.T) * _activation_grad(cache.pre, net.config)
    w1 = unit.w1 if cache.rows is None else unit.w1[cache.rows]
    if cache.rows is None:
        grads[f"unit{index}.w1"] = cache.inputs.T @ dpre
    else:
        grads[f"unit{index}.w1"][cache.rows] = cache.inputs.T @ dpre
    grads[f"unit{index}.b1"] = dpre.sum(axis=0)
    return dpre @ w1.T


# ============================================================================
# PARAMETER VIEWS
# ============================================================================

def parameter_vector(net: SkipNetwork, policy: Optional[PruningPolicy] = None) -> np.ndarray:
    """Flattened parameters the network actually uses under `policy`."""
    cfg = net.config
    policy = policy or net.policy
    chunks = [net.stem_w.ravel(), net.stem_b]
    pieces = [0]
    for index, unit in enumerate(net.units):
        if not policy.is_active(index):
            continue
        w1 = unit.w1 if cfg.composition == "residual" else unit.w1[_piece_rows(cfg, pieces)]
        chunks += [w1.ravel(), unit.b1, unit.w2.ravel(), unit.b2]
        pieces.append(index + 1)
    head_w = net.head_w if cfg.composition == "residual" else net.head_w[_piece_rows(cfg, pieces)]
    chunks += [head_w.ravel(), net.head_b]
    return np.concatenate(chunks)


def with_policy(net: SkipNetwork, policy: PruningPolicy) -> SkipNetwork:
    """Same weights (shared), different policy."""
    if policy.n_units != net.config.units:
        raise ShapeMismatch(f"policy covers {policy.n_units} units, network has {net.config.units}")
    return net.model_copy(update={"policy": policy})


def grad_check(net: SkipNetwork, batch: Batch, eps: float = 1e-5, floor: Optional[float] = None) -> float:
    """
    Largest relative disagreement between analytic and central-difference gradients.

    Every stored parameter is perturbed by +-eps. The error of one entry is
    |a - n| / max(|a|, |n|, floor), floor defaulting to settings.grad_floor.
    """
    if eps <= 0:
        raise ConfigError(f"eps must be > 0, got {eps}")
    floor = settings.grad_floor if floor is None else floor
    scratch = net.model_copy(deep=True)
    _, analytic = loss_and_gradients(scratch, batch.inputs, batch.targets)
    worst = 0.0
    for name, arr in scratch.named_parameters():
        flat = arr.reshape(-1)
        grad = analytic[name].reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            plus = loss(scratch, batch)
            flat[i] = saved - eps
            minus = loss(scratch, batch)
            flat[i] = saved
            numeric = (plus - minus) / (2.0 * eps)
            error = abs(grad[i] - numeric) / max(abs(grad[i]), abs(numeric), floor)
            worst = max(worst, error)
    logger.debug(f"grad_check max relative error {worst:.3e}")
    return float(worst)
