"""Minimal dense networks with hand-written backprop.

Everything is float64 numpy. ``forward`` returns a cache that
``backward`` consumes to produce parameter gradients and the gradient
with respect to the input, which actor-critic updates chain through.
Parameters carry a version counter so a cache from before an optimizer
step cannot silently corrupt a backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrityError, NumericalError

HIDDEN_ACTIVATIONS = ("tanh", "relu")
OUTPUT_ACTIVATIONS = ("identity", "tanh")


@dataclass
class Mlp:
    """Fully connected network; weights[i] maps layer i to i + 1 with
    shape (fan_in, fan_out)."""

    layer_sizes: tuple[int, ...]
    hidden_activation: str
    output_activation: str
    output_scale: float
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    version: int = 0

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]


def init_mlp(
    layer_sizes,
    rng: np.random.Generator,
    hidden_activation: str = "tanh",
    output_activation: str = "identity",
    output_scale: float = 1.0,
    final_layer_scale: float = 1.0,
) -> Mlp:
    """Build a network with uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
    weights and biases.

    ``final_layer_scale`` shrinks the last layer's init, which keeps an
    actor's initial outputs near zero.
    """
    layer_sizes = tuple(int(n) for n in layer_sizes)
    if len(layer_sizes) < 2 or any(n < 1 for n in layer_sizes):
        raise ValueError(f"layer_sizes needs >= 2 positive entries, got {layer_sizes}")
    if hidden_activation not in HIDDEN_ACTIVATIONS:
        raise ValueError(f"hidden_activation must be one of {HIDDEN_ACTIVATIONS}")
    if output_activation not in OUTPUT_ACTIVATIONS:
        raise ValueError(f"output_activation must be one of {OUTPUT_ACTIVATIONS}")
    weights = []
    biases = []
    n_layers = len(layer_sizes) - 1
    for i in range(n_layers):
        fan_in, fan_out = layer_sizes[i], layer_sizes[i + 1]
        bound = 1.0 / np.sqrt(fan_in)
        if i == n_layers - 1:
            bound *= final_layer_scale
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return Mlp(
        layer_sizes=layer_sizes,
        hidden_activation=hidden_activation,
        output_activation=output_activation,
        output_scale=float(output_scale),
        weights=weights,
        biases=biases,
    )


def clone_mlp(net: Mlp) -> Mlp:
    return Mlp(
        layer_sizes=net.layer_sizes,
        hidden_activation=net.hidden_activation,
        output_activation=net.output_activation,
        output_scale=net.output_scale,
        weights=[w.copy() for w in net.weights],
        biases=[b.copy() for b in net.biases],
    )


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # activation entering each layer
    outputs: np.ndarray  # post-activation network output
    version: int
    layer_sizes: tuple[int, ...]
    squeezed: bool


def _as_matrix(x: np.ndarray, dim: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    squeezed = x.ndim == 1
    if squeezed:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"{what} must have {dim} columns, got shape {x.shape}")
    return x, squeezed


def forward(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Evaluate the network on a vector or a (batch, input_dim) matrix.

    Returns the output with matching rank plus the cache backward needs.
    """
    a, squeezed = _as_matrix(x, net.input_dim, "input")
    inputs = []
    n_layers = len(net.weights)
    for i in range(n_layers):
        inputs.append(a)
        z = a @ net.weights[i] + net.biases[i]
        if i < n_layers - 1:
            a = np.tanh(z) if net.hidden_activation == "tanh" else np.maximum(z, 0.0)
        else:
            a = net.output_scale * np.tanh(z) if net.output_activation == "tanh" else z
    if not np.all(np.isfinite(a)):
        raise NumericalError("network produced a non-finite output")
    cache = ForwardCache(
        inputs=inputs,
        outputs=a,
        version=net.version,
        layer_sizes=net.layer_sizes,
        squeezed=squeezed,
    )
    return (a[0] if squeezed else a), cache


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def backward(net: Mlp, cache: ForwardCache, output_grad: np.ndarray) -> tuple[Gradients, np.ndarray]:
    """Backpropagate ``output_grad`` (d loss / d output) through the
    cached forward pass.

    Returns parameter gradients and the loss gradient with respect to
    the forward input, in the input's original rank.
    """
    if cache.version != net.version or cache.layer_sizes != net.layer_sizes:
        raise IntegrityError("forward cache does not match current parameters")
    gy = np.asarray(output_grad, dtype=np.float64)
    if cache.squeezed:
        gy = gy[None, :]
    if gy.shape != cache.outputs.shape:
        raise ValueError(
            f"output_grad shape {gy.shape} != output shape {cache.outputs.shape}"
        )
    d_weights: list[np.ndarray] = [None] * len(net.weights)  # type: ignore[list-item]
    d_biases: list[np.ndarray] = [None] * len(net.biases)  # type: ignore[list-item]
    delta = gy
    for i in range(len(net.weights) - 1, -1, -1):
        a_in = cache.inputs[i]
        if i == len(net.weights) - 1:
            if net.output_activation == "tanh":
                out = cache.outputs / net.output_scale  # tanh(z)
                delta = delta * net.output_scale * (1.0 - out**2)
        else:
            a_out = cache.inputs[i + 1]
            if net.hidden_activation == "tanh":
                delta = delta * (1.0 - a_out**2)
            else:
                delta = delta * (a_out > 0.0)
        d_weights[i] = a_in.T @ delta
        d_biases[i] = delta.sum(axis=0)
        delta = delta @ net.weights[i].T
    dx = delta[0] if cache.squeezed else delta
    return Gradients(weights=d_weights, biases=d_biases), dx


@dataclass
class AdamState:
    """First/second moment accumulators for one network."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m_weights: list[np.ndarray] = field(default_factory=list)
    v_weights: list[np.ndarray] = field(default_factory=list)
    m_biases: list[np.ndarray] = field(default_factory=list)
    v_biases: list[np.ndarray] = field(default_factory=list)


def adam_init(net: Mlp, learning_rate: float) -> AdamState:
    if not learning_rate > 0.0:
        raise ValueError(f"learning_rate must be > 0, got {learning_rate}")
    return AdamState(
        learning_rate=float(learning_rate),
        m_weights=[np.zeros_like(w) for w in net.weights],
        v_weights=[np.zeros_like(w) for w in net.weights],
        m_biases=[np.zeros_like(b) for b in net.biases],
        v_biases=[np.zeros_like(b) for b in net.biases],
    )


def adam_step(net: Mlp, grads: Gradients, state: AdamState) -> None:
    """Apply one Adam update in place and bump the parameter version."""
    for g in grads.weights + grads.biases:
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient passed to adam_step")
    state.step += 1
    t = state.step
    bias1 = 1.0 - state.beta1**t
    bias2 = 1.0 - state.beta2**t
    for params, gs, ms, vs in (
        (net.weights, grads.weights, state.m_weights, state.v_weights),
        (net.biases, grads.biases, state.m_biases, state.v_biases),
    ):
        for p, g, m, v in zip(params, gs, ms, vs):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != param shape {p.shape}")
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * np.square(g)
            p -= state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.epsilon)
    net.version += 1


def scale_gradients(grads: Gradients, factor: float) -> Gradients:
    return Gradients(
        weights=[factor * g for g in grads.weights],
        biases=[factor * g for g in grads.biases],
    )


def _check_same_architecture(target: Mlp, online: Mlp) -> None:
    if (
        target.layer_sizes != online.layer_sizes
        or target.hidden_activation != online.hidden_activation
        or target.output_activation != online.output_activation
        or target.output_scale != online.output_scale
    ):
        raise ValueError("target and online networks differ in architecture")


def hard_copy(target: Mlp, online: Mlp) -> None:
    """target <- online, deep copy of all parameters."""
    _check_same_architecture(target, online)
    for t, o in zip(target.weights, online.weights):
        t[...] = o
    for t, o in zip(target.biases, online.biases):
        t[...] = o
    target.version += 1


def soft_update(target: Mlp, online: Mlp, tau: float) -> None:
    """Polyak blend target <- tau * online + (1 - tau) * target."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    _check_same_architecture(target, online)
    for t, o in zip(target.weights, online.weights):
        t *= 1.0 - tau
        t += tau * o
    for t, o in zip(target.biases, online.biases):
        t *= 1.0 - tau
        t += tau * o
    target.version += 1


# Checkpoint format (one network section per net, text, round-trip
# exact via repr floats):
#   mlp-checkpoint-v1
#   meta <key> <value>
#   net <name>
#   layers <n0> <n1> ...
#   activation <hidden> <output> <output_scale>
#   W<i> <fan_in * fan_out floats, row-major>
#   b<i> <fan_out floats>
#   end

_MAGIC = "mlp-checkpoint-v1"


def _format_floats(a: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in a.ravel())


def save_checkpoint(path, nets: dict[str, Mlp], meta: dict[str, str] | None = None) -> None:
    """Write named networks plus flat string metadata to ``path``."""
    lines = [_MAGIC]
    for key, value in (meta or {}).items():
        key, value = str(key), str(value)
        if " " in key or "\n" in key or "\n" in value:
            raise ValueError(f"metadata key/value must be single-line, got {key!r}")
        lines.append(f"meta {key} {value}")
    for name, net in nets.items():
        if " " in name:
            raise ValueError(f"net name must not contain spaces: {name!r}")
        lines.append(f"net {name}")
        lines.append("layers " + " ".join(str(n) for n in net.layer_sizes))
        lines.append(
            f"activation {net.hidden_activation} {net.output_activation} "
            + repr(net.output_scale)
        )
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            lines.append(f"W{i} " + _format_floats(w))
            lines.append(f"b{i} " + _format_floats(b))
        lines.append("end")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> tuple[dict[str, Mlp], dict[str, str]]:
    """Read a file written by :func:`save_checkpoint`."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [line.rstrip("\n") for line in fh]
    if not lines or lines[0] != _MAGIC:
        raise ValueError(f"{path} is not a {_MAGIC} file")
    meta: dict[str, str] = {}
    nets: dict[str, Mlp] = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if not line.strip():
            i += 1
            continue
        if line.startswith("meta "):
            _, key, value = line.split(" ", 2)
            meta[key] = value
            i += 1
            continue
        if not line.startswith("net "):
            raise ValueError(f"unexpected checkpoint line: {line!r}")
        name = line.split(" ", 1)[1]
        sizes = tuple(int(n) for n in lines[i + 1].split()[1:])
        act_parts = lines[i + 2].split()
        hidden, output, scale = act_parts[1], act_parts[2], float(act_parts[3])
        weights = []
        biases = []
        i += 3
        for j in range(len(sizes) - 1):
            w_vals = np.array([float(v) for v in lines[i].split()[1:]])
            b_vals = np.array([float(v) for v in lines[i + 1].split()[1:]])
            weights.append(w_vals.reshape(sizes[j], sizes[j + 1]))
            biases.append(b_vals)
            i += 2
        if lines[i] != "end":
            raise ValueError(f"missing 'end' after net {name!r}")
        i += 1
        nets[name] = Mlp(
            layer_sizes=sizes,
            hidden_activation=hidden,
            output_activation=output,
            output_scale=scale,
            weights=weights,
            biases=biases,
        )
    return nets, meta
