"""GAN losses, the gradient-norm penalty, conditional sampling, training and generation.

Four variants share one loop:

* ``vanilla`` - the generator models the full encoded row ``[x, y]``;
* ``dragan``  - vanilla plus the gradient-norm penalty on the discriminator;
* ``cgan``    - generator and discriminator both receive the one-hot block ``y``;
  the generator emits ``x`` only;
* ``cdragan`` - cgan plus the penalty, taken w.r.t. the ``x`` block.
"""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import TrainingError, ValidationError, check_matrix
from .diffnet import (
    AdamHyper,
    AdamState,
    MlpParams,
    MlpSpec,
    adam_step,
    init_params,
    input_gradient,
    mlp_backward,
    mlp_forward,
    penalty_value_and_grad,
)
from .pipeline import EncodedBatch, FittedPipeline, fit_pipeline, infer_schema
from .table import atomic_write_text

logger = logging.getLogger(__name__)

VARIANTS = ("vanilla", "dragan", "cgan", "cdragan")
PROB_CLAMP = 1e-7


PENALTY_SPACES = ("logit", "probability")


@dataclass(frozen=True)
class PenaltyConfig:
    lam: float = 10.0
    c: float = 0.25   # variance of the input perturbation
    # target gradient norm; a sigmoid-output critic on standardized data
    # has norms near 0.05, and k=1 drags it far from that regime
    k: float = 0.05
    space: str = "probability"  # differentiate the pre-sigmoid score or the probability

    def __post_init__(self):
        if self.lam < 0 or not self.c > 0 or not self.k > 0:
            raise ValidationError("penalty needs lam >= 0, c > 0, k > 0")
        if self.space not in PENALTY_SPACES:
            raise ValidationError(f"penalty space must be one of {PENALTY_SPACES}")


@dataclass(frozen=True)
class GanConfig:
    variant: str = "cdragan"
    noise_dim: int = 64
    gen_hidden: tuple = (128, 128)
    disc_hidden: tuple = (128, 128)
    activation: str = "tanh"
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    steps: int = 3000
    batch_size: int = 256
    disc_steps_per_gen: int = 2
    adam: AdamHyper = field(default_factory=AdamHyper)
    seed: int = 0
    log_every: int = 50

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.noise_dim < 1:
            raise ValidationError("noise_dim must be >= 1")
        if self.batch_size < 2:
            raise ValidationError("batch_size must be >= 2")
        if self.steps < 0 or self.disc_steps_per_gen < 1 or self.log_every < 1:
            raise ValidationError("steps >= 0, disc_steps_per_gen >= 1, log_every >= 1 required")
        object.__setattr__(self, "gen_hidden", tuple(int(w) for w in self.gen_hidden))
        object.__setattr__(self, "disc_hidden", tuple(int(w) for w in self.disc_hidden))
        if isinstance(self.penalty, dict):
            object.__setattr__(self, "penalty", PenaltyConfig(**self.penalty))
        if isinstance(self.adam, dict):
            object.__setattr__(self, "adam", AdamHyper(**self.adam))

    @property
    def conditional(self):
        return self.variant in ("cgan", "cdragan")

    @property
    def penalized(self):
        return self.variant in ("dragan", "cdragan")

    def to_dict(self):
        d = asdict(self)
        d["gen_hidden"] = list(self.gen_hidden)
        d["disc_hidden"] = list(self.disc_hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class TrainLogRecord:
    step: int
    loss_d: float
    loss_g: float
    penalty: float = None   # None for unpenalised variants
    grad_norm: float = 0.0  # mean ||grad_x D|| on the real batch, in the penalty's space


@dataclass
class GanModel:
    gen_params: MlpParams
    gen_spec: MlpSpec
    pipeline: FittedPipeline
    config: GanConfig
    pool: np.ndarray
    log: list = field(default_factory=list)
    disc_params: MlpParams = None
    disc_spec: MlpSpec = None


# -- losses -------------------------------------------------------------------

def _clamp(p):
    return np.clip(np.asarray(p, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)


def disc_loss(d_real, d_fake):
    """Mean of ``-log D(real) - log(1 - D(fake))`` over the batch."""
    d_real, d_fake = _clamp(d_real), _clamp(d_fake)
    if d_real.size == 0 or d_fake.size == 0:
        raise ValidationError("discriminator loss needs a non-empty batch")
    return float(-np.mean(np.log(d_real)) - np.mean(np.log1p(-d_fake)))


def gen_loss(d_fake):
    """Non-saturating generator loss: mean of ``-log D(fake)``."""
    d_fake = _clamp(d_fake)
    if d_fake.size == 0:
        raise ValidationError("generator loss needs a non-empty batch")
    return float(-np.mean(np.log(d_fake)))


def dragan_penalty(disc_params, disc_spec, x_real, penalty, rng, columns=None):
    """Penalty value and discriminator gradients at noise-perturbed real points.

    ``columns`` selects the block that is perturbed and whose input gradient is
    penalised. Returns ``(value, grads, norms)``.
    """
    x_real = check_matrix(x_real, "x_real", n_cols=disc_spec.n_inputs)
    cols = np.arange(disc_spec.n_inputs) if columns is None else np.asarray(columns)
    noise = rng.normal(0.0, np.sqrt(penalty.c), size=(x_real.shape[0], len(cols)))
    x_pert = x_real.copy()
    x_pert[:, cols] += noise
    if penalty.space == "logit" and disc_spec.output_activation == "sigmoid":
        # same parameters, read out before the sigmoid
        disc_spec = MlpSpec(disc_spec.layer_widths, disc_spec.hidden_activation, "identity")
    return penalty_value_and_grad(disc_params, disc_spec, x_pert, penalty.k, penalty.lam,
                                  columns=None if columns is None else cols)


def sample_conditions(pool, n, rng):
    """Draw ``n`` rows uniformly with replacement from the stored condition rows."""
    pool = np.asarray(pool, dtype=np.float64)
    if pool.ndim != 2 or pool.shape[0] == 0:
        raise ValidationError("condition pool is empty")
    if n == 0:
        return np.zeros((0, pool.shape[1]))
    return pool[rng.integers(0, pool.shape[0], size=n)]


# -- training -----------------------------------------------------------------

def _build_specs(config, x_width, y_width):
    if config.conditional:
        gen_in, gen_out, disc_in = config.noise_dim + y_width, x_width, x_width + y_width
    else:
        gen_in, gen_out, disc_in = config.noise_dim, x_width + y_width, x_width + y_width
    gen = MlpSpec((gen_in, *config.gen_hidden, gen_out), config.activation, "identity")
    disc = MlpSpec((disc_in, *config.disc_hidden, 1), config.activation, "sigmoid")
    return gen, disc


def _seeds(seed):
    """Generator init seed, discriminator init seed, batch stream, penalty stream."""
    return (seed, seed + 1, np.random.default_rng([seed, 1]), np.random.default_rng([seed, 2]))


class _Trainer:
    def __init__(self, config, x, y):
        self.config = config
        self.conditional = config.conditional
        self.x_width = x.shape[1]
        if self.conditional:
            self.data, self.cond = x, y
        else:
            self.data, self.cond = np.hstack([x, y]), None
        self.pool = y if self.conditional else np.zeros((0, y.shape[1]))
        self.gen_spec, self.disc_spec = _build_specs(config, x.shape[1], y.shape[1])
        gseed, dseed, self.rng, self.penalty_rng = _seeds(config.seed)
        self.G = init_params(self.gen_spec, gseed)
        self.D = init_params(self.disc_spec, dseed)
        self.g_state = AdamState.zeros(self.G)
        self.d_state = AdamState.zeros(self.D)
        # cdragan penalises the gradient w.r.t. the feature block only
        self.penalty_cols = np.arange(self.data.shape[1]) if self.conditional else None

    def _fake(self, n):
        z = self.rng.standard_normal((n, self.config.noise_dim))
        if self.conditional:
            y = sample_conditions(self.pool, n, self.rng)
            g_in = np.hstack([z, y])
        else:
            y, g_in = None, z
        out, cache = mlp_forward(self.G, self.gen_spec, g_in)
        d_in = np.hstack([out, y]) if self.conditional else out
        return d_in, cache

    def _real(self, n):
        idx = self.rng.integers(0, self.data.shape[0], size=n)
        if self.conditional:
            return np.hstack([self.data[idx], self.cond[idx]])
        return self.data[idx]

    def disc_step(self):
        b = self.config.batch_size
        real = self._real(b)
        fake, _ = self._fake(b)
        out, cache = mlp_forward(self.D, self.disc_spec, np.vstack([real, fake]))
        d_real, d_fake = out[:b], out[b:]
        loss = disc_loss(d_real, d_fake)
        out_grad = np.vstack([-1.0 / (b * _clamp(d_real)), 1.0 / (b * (1.0 - _clamp(d_fake)))])
        grads, _ = mlp_backward(self.D, self.disc_spec, cache, out_grad)
        pen = None
        if self.config.penalized:
            pen, p_grads, _ = dragan_penalty(self.D, self.disc_spec, real, self.config.penalty,
                                             self.penalty_rng, self.penalty_cols)
            grads = grads + p_grads
        self.D, self.d_state = adam_step(self.D, grads, self.d_state, self.config.adam)
        return loss, pen, real

    def gen_step(self):
        b = self.config.batch_size
        d_in, g_cache = self._fake(b)
        out, d_cache = mlp_forward(self.D, self.disc_spec, d_in)
        loss = gen_loss(out)
        _, d_input_grad = mlp_backward(self.D, self.disc_spec, d_cache, -1.0 / (b * _clamp(out)))
        grads, _ = mlp_backward(self.G, self.gen_spec, g_cache,
                                d_input_grad[:, :self.gen_spec.n_outputs])
        self.G, self.g_state = adam_step(self.G, grads, self.g_state, self.config.adam)
        return loss

    def grad_norm(self, real):
        spec = self.disc_spec
        if self.config.penalty.space == "logit":
            spec = MlpSpec(spec.layer_widths, spec.hidden_activation, "identity")
        g = input_gradient(self.D, spec, real)
        if self.conditional:
            g = g[:, :self.x_width]
        return float(np.mean(np.linalg.norm(g, axis=1)))


def train(config, encoded, pipeline=None):
    """Alternate discriminator and generator Adam steps; returns a :class:`GanModel`.

    On a non-finite loss a :class:`TrainingError` is raised whose ``log``
    attribute holds the records gathered so far.
    """
    x = check_matrix(encoded.x, "encoded x", allow_empty=False)
    y = np.asarray(encoded.y, dtype=np.float64).reshape(x.shape[0], -1)
    if pipeline is not None and (x.shape[1] != pipeline.x_width or y.shape[1] != pipeline.y_width):
        raise ValidationError("encoded batch does not match the pipeline layout")
    if config.conditional and y.shape[1] == 0:
        raise ValidationError(f"variant {config.variant!r} needs categorical or binary-target columns")
    if x.shape[1] == 0 and config.conditional:
        raise ValidationError("conditional variants need at least one numeric column")

    tr = _Trainer(config, x, y)
    log = []
    for step in range(1, config.steps + 1):
        for _ in range(config.disc_steps_per_gen):
            loss_d, pen, real = tr.disc_step()
        loss_g = tr.gen_step()
        values = [loss_d, loss_g] + ([pen] if pen is not None else [])
        if not np.all(np.isfinite(values)):
            err = TrainingError(f"non-finite loss at step {step}")
            err.log = log
            raise err
        if step % config.log_every == 0 or step == config.steps:
            rec = TrainLogRecord(step, loss_d, loss_g, pen, tr.grad_norm(real))
            log.append(rec)
            logger.debug("step %d loss_d=%.4f loss_g=%.4f", step, loss_d, loss_g)
    return GanModel(tr.G, tr.gen_spec, pipeline, config, tr.pool.copy(), log,
                    tr.D, tr.disc_spec)


def generate_encoded(model, n, seed):
    """Raw generator output ``(x, y)`` for ``n`` rows, deterministic per ``seed``."""
    rng = np.random.default_rng(seed)
    cfg = model.config
    if cfg.conditional:
        y = sample_conditions(model.pool, n, rng)
        z = rng.standard_normal((n, cfg.noise_dim))
        x, _ = mlp_forward(model.gen_params, model.gen_spec, np.hstack([z, y]))
        return x, y
    z = rng.standard_normal((n, cfg.noise_dim))
    out, _ = mlp_forward(model.gen_params, model.gen_spec, z)
    x_width = out.shape[1] - model.pool.shape[1]
    return out[:, :x_width], out[:, x_width:]


def generate(model, n, seed, return_report=False):
    """Synthesize ``n`` rows in the original column format."""
    if n < 0:
        raise ValidationError("n must be >= 0")
    x, y = generate_encoded(model, n, seed)
    table, report = model.pipeline.inverse_transform(EncodedBatch(x, y), return_report=True)
    report["n_rows"] = n
    report["seed"] = seed
    return (table, report) if return_report else table


def write_log_csv(log, path):
    lines = ["step,loss_d,loss_g,penalty,grad_norm"]
    for r in log:
        pen = "" if r.penalty is None else repr(r.penalty)
        lines.append(f"{r.step},{r.loss_d!r},{r.loss_g!r},{pen},{r.grad_norm!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


class TabularGAN(BaseEstimator):
    """Fit a GAN on a raw table and sample synthetic rows from it.

    Parameters mirror :class:`GanConfig` plus the preprocessing options; call
    ``fit(table)`` then ``sample(n, random_state)``.
    """

    def __init__(self, schema=None, variant="cdragan", noise_dim=64, gen_hidden=(128, 128),
                 disc_hidden=(128, 128), activation="tanh", penalty_lambda=10.0,
                 penalty_c=0.25, penalty_k=0.05, steps=3000, batch_size=256,
                 disc_steps_per_gen=2, learning_rate=1e-4, beta1=0.5, beta2=0.9,
                 random_state=0, log_every=50, scaler="standard", boxcox=True,
                 skew_threshold=1.0):
        self.schema = schema
        self.variant = variant
        self.noise_dim = noise_dim
        self.gen_hidden = gen_hidden
        self.disc_hidden = disc_hidden
        self.activation = activation
        self.penalty_lambda = penalty_lambda
        self.penalty_c = penalty_c
        self.penalty_k = penalty_k
        self.steps = steps
        self.batch_size = batch_size
        self.disc_steps_per_gen = disc_steps_per_gen
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.random_state = random_state
        self.log_every = log_every
        self.scaler = scaler
        self.boxcox = boxcox
        self.skew_threshold = skew_threshold

    def _config(self):
        return GanConfig(
            variant=self.variant, noise_dim=self.noise_dim, gen_hidden=self.gen_hidden,
            disc_hidden=self.disc_hidden, activation=self.activation,
            penalty=PenaltyConfig(self.penalty_lambda, self.penalty_c, self.penalty_k),
            steps=self.steps, batch_size=self.batch_size,
            disc_steps_per_gen=self.disc_steps_per_gen,
            adam=AdamHyper(self.learning_rate, self.beta1, self.beta2),
            seed=self.random_state, log_every=self.log_every)

    def fit(self, X, y=None):
        schema = self.schema if self.schema is not None else infer_schema(X)
        pipeline = fit_pipeline(X, schema, self.scaler, self.boxcox, self.skew_threshold)
        self.model_ = train(self._config(), pipeline.transform(X), pipeline)
        return self

    def sample(self, n, random_state=0):
        check_is_fitted(self, "model_")
        return generate(self.model_, n, random_state)

    @property
    def log_(self):
        check_is_fitted(self, "model_")
        return self.model_.log
