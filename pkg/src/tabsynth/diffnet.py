"""Dense MLP engine: forward, backward, input gradients, double backprop, Adam.

Every matrix holds one sample per row. Layer ``l`` computes
``a_l = h_{l-1} @ W_l + b_l`` and ``h_l = f_l(a_l)``, with ``W_l`` of shape
``(fan_in, fan_out)``.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import TrainingError, ValidationError, check_matrix

HIDDEN_ACTIVATIONS = ("tanh", "leaky_relu")
OUTPUT_ACTIVATIONS = ("identity", "sigmoid")
LEAKY_SLOPE = 0.2
NORM_EPS = 1e-12


@dataclass(frozen=True)
class MlpSpec:
    layer_widths: tuple
    hidden_activation: str = "tanh"
    output_activation: str = "identity"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if len(widths) < 2:
            raise ValidationError("layer_widths needs at least input and output width")
        if any(w < 1 for w in widths):
            raise ValidationError(f"all layer widths must be >= 1, got {widths}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValidationError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValidationError(f"unknown output activation {self.output_activation!r}")
        object.__setattr__(self, "layer_widths", widths)

    @property
    def n_layers(self):
        return len(self.layer_widths) - 1

    @property
    def n_inputs(self):
        return self.layer_widths[0]

    @property
    def n_outputs(self):
        return self.layer_widths[-1]

    def activation(self, layer):
        return self.output_activation if layer == self.n_layers - 1 else self.hidden_activation

    def to_dict(self):
        return {
            "layer_widths": list(self.layer_widths),
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["layer_widths"]), d["hidden_activation"], d["output_activation"])


@dataclass
class MlpParams:
    """Weights and biases of an MLP; also used to hold their gradients."""

    weights: list
    biases: list

    def arrays(self):
        return [*self.weights, *self.biases]

    def copy(self):
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self):
        return MlpParams([np.zeros_like(w) for w in self.weights],
                         [np.zeros_like(b) for b in self.biases])

    def __add__(self, other):
        return MlpParams([a + b for a, b in zip(self.weights, other.weights)],
                         [a + b for a, b in zip(self.biases, other.biases)])

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def check(self, spec):
        if len(self.weights) != spec.n_layers or len(self.biases) != spec.n_layers:
            raise ValidationError("parameter count does not match spec")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (spec.layer_widths[l], spec.layer_widths[l + 1])
            if w.shape != shape or b.shape != (shape[1],):
                raise ValidationError(
                    f"layer {l}: weight {w.shape} / bias {b.shape} do not match {shape}"
                )
        if not self.is_finite():
            raise ValidationError("parameters contain non-finite values")

    def to_dict(self):
        return {"weights": [w.tolist() for w in self.weights],
                "biases": [b.tolist() for b in self.biases]}

    @classmethod
    def from_dict(cls, d):
        return cls([np.array(w, dtype=np.float64).reshape(len(w), -1) for w in d["weights"]],
                   [np.array(b, dtype=np.float64) for b in d["biases"]])


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)


@dataclass(frozen=True)
class AdamHyper:
    learning_rate: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValidationError("beta1 and beta2 must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be > 0")


@dataclass
class AdamState:
    m: MlpParams
    v: MlpParams
    t: int = 0

    @classmethod
    def zeros(cls, params):
        return cls(params.zeros_like(), params.zeros_like(), 0)

    def copy(self):
        return AdamState(self.m.copy(), self.v.copy(), self.t)


# activations: value, first and second derivative expressed through (pre, post)

def _activate(name, a):
    if name == "tanh":
        return np.tanh(a)
    if name == "leaky_relu":
        return np.where(a > 0, a, LEAKY_SLOPE * a)
    if name == "sigmoid":
        # split form avoids overflow in exp for large |a|
        out = np.empty_like(a)
        pos = a >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
        e = np.exp(a[~pos])
        out[~pos] = e / (1.0 + e)
        return out
    return a.copy()


def _d1(name, a, h):
    if name == "tanh":
        return 1.0 - h * h
    if name == "leaky_relu":
        return np.where(a > 0, 1.0, LEAKY_SLOPE)
    if name == "sigmoid":
        return h * (1.0 - h)
    return np.ones_like(a)


def _d2(name, a, h):
    if name == "tanh":
        return -2.0 * h * (1.0 - h * h)
    if name == "sigmoid":
        return h * (1.0 - h) * (1.0 - 2.0 * h)
    return np.zeros_like(a)


def init_params(spec, seed):
    """Glorot-uniform weights, zero biases; deterministic per ``seed``."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def mlp_forward(params, spec, batch):
    """Run the network on ``batch``; returns ``(output, cache)``."""
    x = check_matrix(batch, "batch", n_cols=spec.n_inputs, allow_empty=True)
    cache = ForwardCache(inputs=x)
    h = x
    for l in range(spec.n_layers):
        a = h @ params.weights[l] + params.biases[l]
        h = _activate(spec.activation(l), a)
        cache.pre.append(a)
        cache.post.append(h)
    return h, cache


def _backward(params, spec, cache, output_grad, extra_pre_grads=None):
    """Reverse pass. ``extra_pre_grads[l]`` is added to the adjoint of ``a_l``."""
    grads = params.zeros_like()
    g = output_grad
    for l in reversed(range(spec.n_layers)):
        name = spec.activation(l)
        delta = g * _d1(name, cache.pre[l], cache.post[l])
        if extra_pre_grads is not None:
            delta = delta + extra_pre_grads[l]
        h_prev = cache.inputs if l == 0 else cache.post[l - 1]
        grads.weights[l] = h_prev.T @ delta
        grads.biases[l] = delta.sum(axis=0)
        g = delta @ params.weights[l].T
    return grads, g


def mlp_backward(params, spec, cache, output_grad):
    """Gradients of ``sum(output * output_grad)`` w.r.t. parameters and inputs."""
    n = cache.inputs.shape[0]
    output_grad = np.asarray(output_grad, dtype=np.float64)
    if output_grad.shape != (n, spec.n_outputs):
        raise ValidationError(
            f"output_grad has shape {output_grad.shape}, expected {(n, spec.n_outputs)}"
        )
    return _backward(params, spec, cache, output_grad)


def _input_grad_pass(params, spec, cache):
    """Backward pass seeded with ones; keeps the per-layer ``g_l`` and ``delta_l``."""
    n = cache.inputs.shape[0]
    g = np.ones((n, 1))
    gs, deltas = [None] * spec.n_layers, [None] * spec.n_layers
    for l in reversed(range(spec.n_layers)):
        gs[l] = g
        deltas[l] = g * _d1(spec.activation(l), cache.pre[l], cache.post[l])
        g = deltas[l] @ params.weights[l].T
    return g, gs, deltas


def _require_scalar_output(spec):
    if spec.n_outputs != 1:
        raise ValidationError(
            f"input gradient needs a scalar-output network, got width {spec.n_outputs}"
        )


def input_gradient(params, spec, x):
    """Per-row gradient of the scalar network output w.r.t. that row's input."""
    _require_scalar_output(spec)
    _, cache = mlp_forward(params, spec, x)
    grad, _, _ = _input_grad_pass(params, spec, cache)
    return grad


def penalty_value_and_grad(params, spec, x_pert, k, lam, columns=None):
    """Value and parameter gradient of ``lam * mean_r (||grad_x D(x_r)|| - k)**2``.

    ``columns`` restricts the norm to a subset of input columns (the feature
    block of a conditional discriminator); ``None`` uses all of them. The
    gradient is computed by differentiating the backward pass itself.
    Also returns the per-row gradient norms.
    """
    _require_scalar_output(spec)
    _, cache = mlp_forward(params, spec, x_pert)
    n = cache.inputs.shape[0]
    g0, gs, deltas = _input_grad_pass(params, spec, cache)

    sel = g0 if columns is None else g0[:, columns]
    norms = np.sqrt(np.sum(sel * sel, axis=1))
    resid = norms - k
    value = float(lam * np.mean(resid ** 2)) if n else 0.0

    # adjoint of g0; a zero-norm row has sel == 0 and contributes nothing
    coef = (2.0 * lam / n) * resid / np.maximum(norms, NORM_EPS)
    g_bar = np.zeros_like(g0)
    if columns is None:
        g_bar = coef[:, None] * sel
    else:
        g_bar[:, columns] = coef[:, None] * sel

    grads = params.zeros_like()
    extra = [None] * spec.n_layers
    # reverse of the input-gradient pass walks the layers first to last
    for l in range(spec.n_layers):
        name = spec.activation(l)
        a, h = cache.pre[l], cache.post[l]
        # g_{l-1} = delta_l @ W_l.T
        grads.weights[l] += g_bar.T @ deltas[l]
        delta_bar = g_bar @ params.weights[l]
        # delta_l = g_l * f'(a_l)
        extra[l] = delta_bar * gs[l] * _d2(name, a, h)
        g_bar = delta_bar * _d1(name, a, h)
    # g_L is the constant seed, so the final g_bar is dropped; the forward
    # pass then carries the accumulated pre-activation adjoints back to theta
    fwd_grads, _ = _backward(params, spec, cache, np.zeros((n, 1)), extra_pre_grads=extra)
    return value, grads + fwd_grads, norms


def penalty_param_gradient(params, spec, x_pert, k, lam, columns=None):
    """Parameter gradient of the gradient-norm penalty (see ``penalty_value_and_grad``)."""
    return penalty_value_and_grad(params, spec, x_pert, k, lam, columns)[1]


def adam_step(params, grads, state, hyper):
    """One bias-corrected Adam update. Returns new ``(params, state)``; inputs are untouched."""
    if not grads.is_finite():
        raise TrainingError("non-finite gradient passed to adam_step")
    t = state.t + 1
    b1, b2 = hyper.beta1, hyper.beta2
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    new_p, new_m, new_v = params.zeros_like(), params.zeros_like(), params.zeros_like()
    for attr in ("weights", "biases"):
        for i, (p, g, m, v) in enumerate(zip(getattr(params, attr), getattr(grads, attr),
                                             getattr(state.m, attr), getattr(state.v, attr))):
            m2 = b1 * m + (1.0 - b1) * g
            v2 = b2 * v + (1.0 - b2) * (g * g)
            step = hyper.learning_rate * (m2 / c1) / (np.sqrt(v2 / c2) + hyper.epsilon)
            getattr(new_p, attr)[i] = p - step
            getattr(new_m, attr)[i] = m2
            getattr(new_v, attr)[i] = v2
    return new_p, AdamState(new_m, new_v, t)
