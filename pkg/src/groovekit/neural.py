"""Neural groove models on the internal autodiff engine.

Two families:

* an MLP regressor from a flattened score to the stacked hits/velocities/
  offsets target, trained with squared error;
* a Seq2Seq model: bidirectional LSTM encoder to a latent vector (mean and
  log-variance heads), 2-layer LSTM decoder with per-step hit/velocity/
  offset heads.  Per step the loss is binary cross-entropy over instruments
  plus squared velocity and offset errors; an optional weighted KL term to a
  standard normal prior turns it into a variational information bottleneck.
  Groove-transfer conditioning appends the current score row to each decoder
  input so the latent is free to specialize on groove.

Training always uses teacher forcing and the reparameterized latent; all
randomness flows from the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, bce_with_logits, concat, no_grad, sigmoid, square, tanh, tmean, tsum
from .baselines import knn_neighbors
from .errors import EmptyTrainingSet, NonFiniteLoss, UntrainedModel
from .representation import MAX_OFFSET, NUM_CATEGORIES, GrooveTensor
from .transforms import TapTensor, flatten_to_taps, normalize_categories, remove_voice

TASKS = ("humanize", "infill", "tap2drum")

HIT_THRESHOLD = 0.5


@dataclass(slots=True)
class TrainConfig:
    """Optimizer, architecture and task settings for one training run."""

    task: str = "humanize"
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 200
    batch_size: int = 32
    beta_vib: float = 0.0
    seed: int = 0
    teacher_forcing: bool = True
    transfer_conditioning: bool = False
    enc_dim: int = 64
    z_dim: int = 32
    dec_dim: int = 64
    mlp_hidden: int = 256
    infill_categories: tuple[int, ...] = (2, 3)
    kl_anneal_steps: int = 0  # optional linear ramp of the KL weight, 0 = constant

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        if self.beta_vib < 0:
            raise ValueError("beta_vib must be >= 0")
        if not self.teacher_forcing:
            raise ValueError("training without teacher forcing is not supported")


@dataclass(slots=True)
class MLPParams:
    """Single-hidden-layer regressor weights (input T*M -> hidden -> T*M*3)."""

    tensors: dict[str, Tensor]
    timesteps: int
    hidden_dim: int
    trained: bool = False
    loss_history: list[float] = field(default_factory=list)


@dataclass(slots=True)
class Seq2SeqParams:
    """Encoder/latent/decoder weights plus the task wiring they were built for."""

    tensors: dict[str, Tensor]
    task: str
    input_dim: int
    enc_dim: int
    z_dim: int
    dec_dim: int
    conditioned: bool = False
    infill_categories: tuple[int, ...] = (2, 3)
    trained: bool = False
    loss_history: list[float] = field(default_factory=list)


def task_input_dim(task: str, conditioned: bool) -> int:
    if conditioned:
        return NUM_CATEGORIES * 3  # encoder sees the full performance
    return 2 if task == "tap2drum" else NUM_CATEGORIES


def _uniform_init(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return ad.parameter(rng.uniform(-bound, bound, size=shape))


def _lstm_params(rng: np.random.Generator, in_dim: int, hidden: int) -> dict[str, Tensor]:
    bias = np.zeros(4 * hidden)
    bias[hidden : 2 * hidden] = 1.0  # forget-gate bias
    return {
        "wx": _uniform_init(rng, in_dim, (in_dim, 4 * hidden)),
        "wh": _uniform_init(rng, hidden, (hidden, 4 * hidden)),
        "b": ad.parameter(bias),
    }


def init_seq2seq(cfg: TrainConfig, rng: np.random.Generator | None = None) -> Seq2SeqParams:
    rng = rng or np.random.default_rng(cfg.seed)
    input_dim = task_input_dim(cfg.task, cfg.transfer_conditioning)
    m = NUM_CATEGORIES
    dec_in = 3 * m + (m if cfg.transfer_conditioning else 0)
    e, z, d = cfg.enc_dim, cfg.z_dim, cfg.dec_dim
    tensors: dict[str, Tensor] = {}
    for direction in ("fwd", "bwd"):
        for key, value in _lstm_params(rng, input_dim, e).items():
            tensors[f"enc_{direction}_{key}"] = value
    tensors["lat_mu_w"] = _uniform_init(rng, 2 * e, (2 * e, z))
    tensors["lat_mu_b"] = ad.parameter(np.zeros(z))
    tensors["lat_logvar_w"] = _uniform_init(rng, 2 * e, (2 * e, z))
    tensors["lat_logvar_b"] = ad.parameter(np.zeros(z))
    tensors["dec_init_w"] = _uniform_init(rng, z, (z, 4 * d))
    tensors["dec_init_b"] = ad.parameter(np.zeros(4 * d))
    for layer, in_dim in (("dec1", dec_in), ("dec2", d)):
        for key, value in _lstm_params(rng, in_dim, d).items():
            tensors[f"{layer}_{key}"] = value
    for head in ("hit", "vel", "off"):
        tensors[f"head_{head}_w"] = _uniform_init(rng, d, (d, m))
        tensors[f"head_{head}_b"] = ad.parameter(np.zeros(m))
    return Seq2SeqParams(
        tensors=tensors,
        task=cfg.task,
        input_dim=input_dim,
        enc_dim=e,
        z_dim=z,
        dec_dim=d,
        conditioned=cfg.transfer_conditioning,
        infill_categories=normalize_categories(cfg.infill_categories),
    )


def init_mlp(cfg: TrainConfig, timesteps: int, rng: np.random.Generator | None = None) -> MLPParams:
    rng = rng or np.random.default_rng(cfg.seed)
    m = NUM_CATEGORIES
    in_dim, out_dim = timesteps * m, timesteps * m * 3
    tensors = {
        "w1": _uniform_init(rng, in_dim, (in_dim, cfg.mlp_hidden)),
        "b1": ad.parameter(np.zeros(cfg.mlp_hidden)),
        "w2": _uniform_init(rng, cfg.mlp_hidden, (cfg.mlp_hidden, out_dim)),
        "b2": ad.parameter(np.zeros(out_dim)),
    }
    return MLPParams(tensors=tensors, timesteps=timesteps, hidden_dim=cfg.mlp_hidden)


# --- forward graphs ----------------------------------------------------------


def _lstm_step(p: dict[str, Tensor], prefix: str, x: Tensor, h: Tensor, c: Tensor, hidden: int):
    gates = x @ p[f"{prefix}_wx"] + h @ p[f"{prefix}_wh"] + p[f"{prefix}_b"]
    i = sigmoid(gates[:, 0 * hidden : 1 * hidden])
    f = sigmoid(gates[:, 1 * hidden : 2 * hidden])
    g = tanh(gates[:, 2 * hidden : 3 * hidden])
    o = sigmoid(gates[:, 3 * hidden : 4 * hidden])
    c_next = f * c + i * g
    return o * tanh(c_next), c_next


def _encode_graph(params: Seq2SeqParams, inputs: np.ndarray) -> tuple[Tensor, Tensor]:
    """inputs (T, B, F) -> latent mean and log-variance, each (B, Z)."""
    p = params.tensors
    steps, batch, _ = inputs.shape
    e = params.enc_dim
    h_f = c_f = Tensor(np.zeros((batch, e)))
    h_b = c_b = Tensor(np.zeros((batch, e)))
    for t in range(steps):
        h_f, c_f = _lstm_step(p, "enc_fwd", Tensor(inputs[t]), h_f, c_f, e)
        h_b, c_b = _lstm_step(p, "enc_bwd", Tensor(inputs[steps - 1 - t]), h_b, c_b, e)
    summary = concat([h_f, h_b], axis=1)
    mu = summary @ p["lat_mu_w"] + p["lat_mu_b"]
    logvar = summary @ p["lat_logvar_w"] + p["lat_logvar_b"]
    return mu, logvar


def _decoder_state(params: Seq2SeqParams, z: Tensor) -> list[Tensor]:
    d = params.dec_dim
    packed = z @ params.tensors["dec_init_w"] + params.tensors["dec_init_b"]
    return [packed[:, i * d : (i + 1) * d] for i in range(4)]


def _decode_graph(
    params: Seq2SeqParams,
    z: Tensor,
    steps: int,
    teacher: tuple[np.ndarray, np.ndarray, np.ndarray] | None,
    condition: np.ndarray | None,
) -> tuple[list[Tensor], list[Tensor], list[Tensor]]:
    """Run the decoder for `steps` timesteps.

    With `teacher` set, step t consumes the ground-truth row t-1; otherwise
    the model feeds back its own (thresholded) predictions.  When the model
    is conditioned, the score row for the current step is appended to every
    decoder input.  Returns per-step hit logits, velocities and offsets.
    """
    p = params.tensors
    d = params.dec_dim
    batch = z.shape[0]
    h1, c1, h2, c2 = _decoder_state(params, z)
    prev = Tensor(np.zeros((batch, 3 * NUM_CATEGORIES)))
    hit_logits: list[Tensor] = []
    vels: list[Tensor] = []
    offs: list[Tensor] = []
    for t in range(steps):
        x = prev if condition is None else concat([prev, Tensor(condition[t])], axis=1)
        h1, c1 = _lstm_step(p, "dec1", x, h1, c1, d)
        h2, c2 = _lstm_step(p, "dec2", h1, h2, c2, d)
        logits = h2 @ p["head_hit_w"] + p["head_hit_b"]
        vel = sigmoid(h2 @ p["head_vel_w"] + p["head_vel_b"])
        off = tanh(h2 @ p["head_off_w"] + p["head_off_b"]) * 0.5
        hit_logits.append(logits)
        vels.append(vel)
        offs.append(off)
        if teacher is not None:
            prev = Tensor(np.concatenate([teacher[0][t], teacher[1][t], teacher[2][t]], axis=1))
        else:
            fed_hits = (ad._sigmoid(logits.data) >= HIT_THRESHOLD).astype(np.float64)
            prev = Tensor(np.concatenate([fed_hits, vel.data, off.data], axis=1))
    return hit_logits, vels, offs


def kl_gaussian_prior(mu: np.ndarray, sigma: np.ndarray) -> float:
    """KL(N(mu, diag sigma^2) || N(0, I)) = sum_i 0.5 (mu_i^2 + sigma_i^2 - 1 - ln sigma_i^2)."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if (sigma <= 0).any():
        raise ValueError("sigma must be positive")
    return float(0.5 * np.sum(mu * mu + sigma * sigma - 1.0 - 2.0 * np.log(sigma)))


def loss_step(
    hit_probs: np.ndarray,
    vel_pred: np.ndarray,
    off_pred: np.ndarray,
    hits: np.ndarray,
    vels: np.ndarray,
    offs: np.ndarray,
) -> float:
    """One timestep of the reconstruction loss, from probabilities.

    Per-instrument binary cross-entropy plus squared velocity and offset
    errors, summed over instruments.
    """
    p = np.clip(np.asarray(hit_probs, dtype=np.float64), 1e-12, 1.0 - 1e-12)
    h = np.asarray(hits, dtype=np.float64)
    ce = -(h * np.log(p) + (1.0 - h) * np.log1p(-p)).sum()
    sq_v = np.square(np.asarray(vels) - np.asarray(vel_pred)).sum()
    sq_o = np.square(np.asarray(offs) - np.asarray(off_pred)).sum()
    return float(ce + sq_v + sq_o)


def _reconstruction_loss(
    hit_logits: list[Tensor],
    vels: list[Tensor],
    offs: list[Tensor],
    targets: tuple[np.ndarray, np.ndarray, np.ndarray],
) -> Tensor:
    """Mean over the batch of the per-step losses summed across timesteps."""
    h_t, v_t, o_t = targets
    per_example: Tensor | None = None
    for t in range(len(hit_logits)):
        step_loss = (
            tsum(bce_with_logits(hit_logits[t], h_t[t]), axis=1)
            + tsum(square(vels[t] - v_t[t]), axis=1)
            + tsum(square(offs[t] - o_t[t]), axis=1)
        )
        per_example = step_loss if per_example is None else per_example + step_loss
    return tmean(per_example)


def _kl_term(mu: Tensor, logvar: Tensor) -> Tensor:
    per_example = tsum(square(mu) + ad.exp(logvar) - 1.0 - logvar, axis=1) * 0.5
    return tmean(per_example)


def training_loss(
    params: Seq2SeqParams,
    inputs: np.ndarray,
    targets: tuple[np.ndarray, np.ndarray, np.ndarray],
    condition: np.ndarray | None,
    beta_vib: float,
    eps_noise: np.ndarray | None,
) -> Tensor:
    """Teacher-forced loss on one batch; eps_noise (B, Z) reparameterizes z."""
    mu, logvar = _encode_graph(params, inputs)
    if eps_noise is not None:
        z = mu + ad.exp(logvar * 0.5) * eps_noise
    else:
        z = mu
    hit_logits, vels, offs = _decode_graph(params, z, inputs.shape[0], targets, condition)
    loss = _reconstruction_loss(hit_logits, vels, offs, targets)
    if beta_vib > 0.0:
        loss = loss + _kl_term(mu, logvar) * beta_vib
    return loss


# --- optimizer and training loops -------------------------------------------


class Adam:
    """Standard Adam with bias correction, updating tensors in place."""

    def __init__(self, tensors: dict[str, Tensor], lr: float, beta1: float, beta2: float, eps: float):
        self.tensors = tensors
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(t.data) for k, t in tensors.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in tensors.items()}
        self.t = 0

    def step(self) -> None:
        self.t += 1
        corr1 = 1.0 - self.beta1**self.t
        corr2 = 1.0 - self.beta2**self.t
        for key, tensor in self.tensors.items():
            if tensor.grad is None:
                continue
            g = tensor.grad
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * g * g
            m_hat = self.m[key] / corr1
            v_hat = self.v[key] / corr2
            tensor.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for tensor in self.tensors.values():
            tensor.grad = None


def task_training_arrays(
    corpus: list[GrooveTensor], cfg: TrainConfig
) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray, np.ndarray], np.ndarray | None]:
    """Build (inputs, targets, condition) arrays, each leading with the window axis.

    inputs (N, T, F) is the task's compressed view; targets are the full
    (hits, velocities, offsets); condition (N, T, M) is the score when
    groove-transfer conditioning is on.
    """
    if not corpus:
        raise EmptyTrainingSet("no training windows")
    hits = np.stack([g.hits for g in corpus])
    vels = np.stack([g.velocities for g in corpus])
    offs = np.stack([g.offsets for g in corpus])
    condition = hits.copy() if cfg.transfer_conditioning else None
    if cfg.transfer_conditioning:
        inputs = np.concatenate([hits, vels, offs], axis=2)
    elif cfg.task == "humanize":
        inputs = hits.copy()
    elif cfg.task == "infill":
        inputs = np.stack([remove_voice(g, cfg.infill_categories)[0].hits for g in corpus])
    else:  # tap2drum
        taps = [flatten_to_taps(g) for g in corpus]
        inputs = np.stack([np.column_stack([t.taps, t.tap_offsets]) for t in taps])
    return inputs, (hits, vels, offs), condition


def train_seq2seq(corpus: list[GrooveTensor], cfg: TrainConfig) -> Seq2SeqParams:
    """Train the Seq2Seq model; deterministic for a given seed and corpus."""
    rng = np.random.default_rng(cfg.seed)
    params = init_seq2seq(cfg, rng)
    inputs, targets, condition = task_training_arrays(corpus, cfg)
    steps_t = inputs.shape[1]
    n = inputs.shape[0]
    optimizer = Adam(params.tensors, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            batch = order[lo : lo + cfg.batch_size]
            eps = rng.standard_normal((len(batch), cfg.z_dim))
            beta = cfg.beta_vib
            if cfg.kl_anneal_steps > 0:
                beta *= min(1.0, (step + 1) / cfg.kl_anneal_steps)
            loss = training_loss(
                params,
                inputs[batch].transpose(1, 0, 2),
                tuple(t[batch].transpose(1, 0, 2) for t in targets),
                condition[batch].transpose(1, 0, 2) if condition is not None else None,
                beta,
                eps,
            )
            value = float(loss.data)
            if not np.isfinite(value):
                raise NonFiniteLoss(f"loss {value} at step {step} (T={steps_t}, lr={cfg.learning_rate})")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            params.loss_history.append(value)
            step += 1
    params.trained = True
    return params


def mlp_targets(groove: GrooveTensor) -> np.ndarray:
    """Stacked per-step target rows [hits | velocities | offsets], flattened."""
    return np.concatenate([groove.hits, groove.velocities, groove.offsets], axis=1).reshape(-1)


def _mlp_forward(params: MLPParams, x: Tensor) -> Tensor:
    p = params.tensors
    return ad.relu(x @ p["w1"] + p["b1"]) @ p["w2"] + p["b2"]


def train_mlp(corpus: list[GrooveTensor], cfg: TrainConfig) -> MLPParams:
    """Squared-error training of the MLP humanizer; deterministic per seed."""
    if not corpus:
        raise EmptyTrainingSet("no training windows")
    rng = np.random.default_rng(cfg.seed)
    timesteps = corpus[0].timesteps
    params = init_mlp(cfg, timesteps, rng)
    X = np.stack([g.hits.reshape(-1) for g in corpus])
    Y = np.stack([mlp_targets(g) for g in corpus])
    optimizer = Adam(params.tensors, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(corpus))
        for lo in range(0, len(corpus), cfg.batch_size):
            batch = order[lo : lo + cfg.batch_size]
            pred = _mlp_forward(params, Tensor(X[batch]))
            loss = tmean(square(pred - Y[batch]))
            value = float(loss.data)
            if not np.isfinite(value):
                raise NonFiniteLoss(f"loss {value} at step {step}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            params.loss_history.append(value)
            step += 1
    params.trained = True
    return params


# --- inference ----------------------------------------------------------------


def encode(inputs: np.ndarray, params: Seq2SeqParams) -> tuple[np.ndarray, np.ndarray]:
    """Latent (mu, sigma) for one window (T, F) or a batch (T, B, F)."""
    inputs = np.asarray(inputs, dtype=np.float64)
    single = inputs.ndim == 2
    if single:
        inputs = inputs[:, None, :]
    if inputs.shape[2] != params.input_dim:
        raise ValueError(f"expected {params.input_dim} input features, got {inputs.shape[2]}")
    with no_grad():
        mu, logvar = _encode_graph(params, inputs)
    sigma = np.exp(0.5 * logvar.data)
    if single:
        return mu.data[0], sigma[0]
    return mu.data, sigma


def decode(
    z: np.ndarray,
    params: Seq2SeqParams,
    steps: int,
    condition: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Autoregressive rollout from a latent vector.

    Returns (hit probabilities, velocities, offsets), each (steps, M); the
    model feeds back its own thresholded hits.  `condition` (steps, M) is
    required iff the parameters use groove-transfer conditioning.
    """
    if params.conditioned and condition is None:
        raise ValueError("conditioned decoder needs the score rows")
    if not params.conditioned and condition is not None:
        raise ValueError("unconditioned decoder got a condition")
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z[None, :]
    cond = None
    if condition is not None:
        cond = np.asarray(condition, dtype=np.float64)
        if cond.ndim == 2:
            cond = cond[:, None, :]
    with no_grad():
        hit_logits, vels, offs = _decode_graph(params, Tensor(z), steps, None, cond)
    probs = np.stack([ad._sigmoid(t.data) for t in hit_logits])
    vel = np.stack([t.data for t in vels])
    off = np.stack([t.data for t in offs])
    if single:
        return probs[:, 0], vel[:, 0], off[:, 0]
    return probs, vel, off


def _require_trained(params: Seq2SeqParams | MLPParams) -> None:
    if not params.trained:
        raise UntrainedModel("parameters were never trained")


def _latent(
    inputs: np.ndarray,
    params: Seq2SeqParams,
    z_temperature: float,
    rng: np.random.Generator | None,
) -> np.ndarray:
    mu, sigma = encode(inputs, params)
    if z_temperature > 0.0:
        rng = rng or np.random.default_rng(0)
        return mu + z_temperature * sigma * rng.standard_normal(mu.shape)
    return mu


def humanize(
    hits: np.ndarray,
    params: Seq2SeqParams,
    tempo_bpm: float = 120.0,
    z_temperature: float = 0.0,
    rng: np.random.Generator | None = None,
) -> GrooveTensor:
    """Perform a quantized score: keep its hits, predict velocities and offsets."""
    _require_trained(params)
    if params.task != "humanize" or params.conditioned:
        raise UntrainedModel(f"parameters are for task {params.task!r} (conditioned={params.conditioned})")
    hits = np.asarray(hits, dtype=np.float64)
    z = _latent(hits, params, z_temperature, rng)
    _, vel, off = decode(z, params, hits.shape[0])
    return GrooveTensor(hits.copy(), vel * hits, _clip_offsets(off) * hits, tempo_bpm)


def infill(
    missing: GrooveTensor,
    params: Seq2SeqParams,
    category: int | tuple[int, ...] | None = None,
    z_temperature: float = 0.0,
    rng: np.random.Generator | None = None,
) -> GrooveTensor:
    """Regenerate the removed drum category; all other rows pass through."""
    _require_trained(params)
    if params.task != "infill":
        raise UntrainedModel(f"parameters are for task {params.task!r}")
    selected = normalize_categories(category) if category is not None else params.infill_categories
    z = _latent(missing.hits, params, z_temperature, rng)
    probs, vel, off = decode(z, params, missing.timesteps)
    out = missing.copy()
    for c in selected:
        new_hits = (probs[:, c] >= HIT_THRESHOLD).astype(np.float64)
        out.hits[:, c] = new_hits
        out.velocities[:, c] = vel[:, c] * new_hits
        out.offsets[:, c] = _clip_offsets(off[:, c]) * new_hits
    return out


def tap2drum(
    taps: TapTensor,
    params: Seq2SeqParams,
    tempo_bpm: float = 120.0,
    z_temperature: float = 0.0,
    rng: np.random.Generator | None = None,
) -> GrooveTensor:
    """Instantiate a full kit performance from a timing-only tap track."""
    _require_trained(params)
    if params.task != "tap2drum":
        raise UntrainedModel(f"parameters are for task {params.task!r}")
    inputs = np.column_stack([taps.taps, taps.tap_offsets])
    z = _latent(inputs, params, z_temperature, rng)
    probs, vel, off = decode(z, params, taps.timesteps)
    hits = (probs >= HIT_THRESHOLD).astype(np.float64)
    return GrooveTensor(hits, vel * hits, _clip_offsets(off) * hits, tempo_bpm)


def groove_transfer_humanize(
    hits: np.ndarray,
    trainset: list[GrooveTensor],
    params: Seq2SeqParams,
    k: int = 3,
    tempo_bpm: float = 120.0,
) -> GrooveTensor:
    """Humanize a score with the mean groove embedding of its nearest neighbors.

    Neighbors come from the hit-overlap similarity; their full performances
    are embedded and the mean latent is decoded conditioned on the score.
    """
    _require_trained(params)
    if not params.conditioned:
        raise UntrainedModel("parameters were not trained with transfer conditioning")
    if not trainset:
        raise EmptyTrainingSet("no windows to retrieve a groove from")
    hits = np.asarray(hits, dtype=np.float64)
    neighbors = knn_neighbors(hits, trainset, min(k, len(trainset)))
    latents = []
    for index in neighbors:
        g = trainset[index]
        performance = np.concatenate([g.hits, g.velocities, g.offsets], axis=1)
        mu, _ = encode(performance, params)
        latents.append(mu)
    z = np.mean(latents, axis=0)
    _, vel, off = decode(z, params, hits.shape[0], condition=hits)
    return GrooveTensor(hits.copy(), vel * hits, _clip_offsets(off) * hits, tempo_bpm)


def mlp_predict(hits: np.ndarray, params: MLPParams) -> np.ndarray:
    """Raw stacked prediction rows [hits | velocities | offsets], shape (T, 3M)."""
    hits = np.asarray(hits, dtype=np.float64)
    with no_grad():
        out = _mlp_forward(params, Tensor(hits.reshape(1, -1)))
    return out.data.reshape(params.timesteps, 3 * NUM_CATEGORIES)


def mlp_humanize(hits: np.ndarray, params: MLPParams, tempo_bpm: float = 120.0) -> GrooveTensor:
    """MLP humanization: clamp predicted velocities/offsets and mask to the score."""
    _require_trained(params)
    hits = np.asarray(hits, dtype=np.float64)
    m = NUM_CATEGORIES
    raw = mlp_predict(hits, params)
    vel = np.clip(raw[:, m : 2 * m], 0.0, 1.0)
    off = np.clip(raw[:, 2 * m : 3 * m], -0.5, MAX_OFFSET)
    return GrooveTensor(hits.copy(), vel * hits, off * hits, tempo_bpm)


def _clip_offsets(off: np.ndarray) -> np.ndarray:
    # tanh * 0.5 is already inside (-0.5, 0.5); clip guards float round-up
    return np.clip(off, -0.5, MAX_OFFSET)


# --- gradient checking --------------------------------------------------------


def gradient_check(
    params: Seq2SeqParams | MLPParams,
    sample: list[GrooveTensor] | tuple,
    cfg: TrainConfig,
    epsilon: float = 1e-4,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Exhaustive over every parameter entry; intended for toy dimensions.  The
    reparameterization noise is frozen so the loss is a deterministic
    function of the parameters.  `sample` is either a window list or the
    prebuilt arrays: (X, Y) for the MLP, (inputs, targets, condition) with
    time-major shapes for the Seq2Seq models.
    """
    rng = np.random.default_rng(cfg.seed)
    if isinstance(params, MLPParams):
        if isinstance(sample, tuple):
            X, Y = sample
        else:
            X = np.stack([g.hits.reshape(-1) for g in sample])
            Y = np.stack([mlp_targets(g) for g in sample])

        def loss_fn() -> Tensor:
            return tmean(square(_mlp_forward(params, Tensor(X)) - Y))

    else:
        if isinstance(sample, tuple):
            inputs, targets, condition = sample
        else:
            inputs, targets, condition = task_training_arrays(sample, cfg)
            inputs = inputs.transpose(1, 0, 2)
            targets = tuple(t.transpose(1, 0, 2) for t in targets)
            condition = condition.transpose(1, 0, 2) if condition is not None else None
        eps_noise = rng.standard_normal((inputs.shape[1], cfg.z_dim))

        def loss_fn() -> Tensor:
            return training_loss(params, inputs, targets, condition, cfg.beta_vib, eps_noise)

    for tensor in params.tensors.values():
        tensor.grad = None
    loss_fn().backward()
    analytic = {k: t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for k, t in params.tensors.items()}

    worst = 0.0
    with no_grad():
        for key, tensor in params.tensors.items():
            flat = tensor.data.reshape(-1)
            grads = analytic[key].reshape(-1)
            for i in range(flat.size):
                saved = flat[i]
                flat[i] = saved + epsilon
                up = float(loss_fn().data)
                flat[i] = saved - epsilon
                down = float(loss_fn().data)
                flat[i] = saved
                numeric = (up - down) / (2.0 * epsilon)
                denom = max(1e-8, abs(grads[i]) + abs(numeric))
                worst = max(worst, abs(grads[i] - numeric) / denom)
    return worst
