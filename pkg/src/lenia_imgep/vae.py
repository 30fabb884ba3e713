"""Convolutional beta-VAE over square Lenia patterns.

Encoder: four 4x4 stride-2 convolutions with 32 channels and ReLU, two
256-unit fully connected layers with ReLU, then a linear head emitting the
mean and log-variance of each latent. The decoder mirrors it and emits
pre-sigmoid logits of the input size.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from scipy import ndimage
from torch import nn

N_CONV = 4
BATCH_SIZE = 64


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class VaeConfig:
    input_size: int = 256
    latent_dim: int = 8
    beta: float = 5.0
    channels: int = 32
    hidden: int = 256

    def __post_init__(self):
        if self.input_size % 2**N_CONV or self.input_size < 2**N_CONV:
            raise ValueError(f"input_size must be a positive multiple of {2 ** N_CONV}, got {self.input_size}")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")

    @property
    def seed_size(self) -> int:
        return self.input_size // 2**N_CONV


@dataclass(frozen=True)
class AdamSettings:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 1e-5


class BetaVAE(nn.Module):
    def __init__(self, config: VaeConfig = VaeConfig()):
        super().__init__()
        self.config = config
        c, h, s, d = config.channels, config.hidden, config.seed_size, config.latent_dim
        self.enc_convs = nn.ModuleList(
            [nn.Conv2d(1 if i == 0 else c, c, 4, stride=2, padding=1) for i in range(N_CONV)])
        self.enc_fc1 = nn.Linear(c * s * s, h)
        self.enc_fc2 = nn.Linear(h, h)
        self.enc_head = nn.Linear(h, 2 * d)
        self.dec_fc1 = nn.Linear(d, h)
        self.dec_fc2 = nn.Linear(h, c * s * s)
        self.dec_convs = nn.ModuleList(
            [nn.ConvTranspose2d(c, 1 if i == N_CONV - 1 else c, 4, stride=2, padding=1) for i in range(N_CONV)])

    def _as_batch(self, x) -> torch.Tensor:
        x = torch.as_tensor(np.asarray(x) if not torch.is_tensor(x) else x)
        x = x.to(dtype=self.enc_head.weight.dtype)
        if x.ndim == 3:
            x = x.unsqueeze(1)
        S = self.config.input_size
        if x.ndim != 4 or x.shape[1:] != (1, S, S):
            raise ValueError(f"expected a batch of {S}x{S} patterns, got shape {tuple(x.shape)}")
        return x

    def encode(self, x) -> tuple[torch.Tensor, torch.Tensor]:
        h = self._as_batch(x)
        for conv in self.enc_convs:
            h = F.relu(conv(h))
        h = F.relu(self.enc_fc1(h.flatten(1)))
        h = F.relu(self.enc_fc2(h))
        out = self.enc_head(h)
        d = self.config.latent_dim
        return out[:, :d], out[:, d:]

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        c, s = self.config.channels, self.config.seed_size
        h = F.relu(self.dec_fc1(z))
        h = F.relu(self.dec_fc2(h)).view(-1, c, s, s)
        for i, conv in enumerate(self.dec_convs):
            h = conv(h)
            if i < N_CONV - 1:
                h = F.relu(h)
        return h[:, 0]

    def forward(self, x, generator: torch.Generator | None = None, eta: torch.Tensor | None = None):
        mu, logvar = self.encode(x)
        z = reparameterize(mu, logvar, generator=generator, eta=eta, sample=self.training)
        return self.decode(z), mu, logvar


def reparameterize(mu, logvar, generator=None, eta=None, sample: bool = True) -> torch.Tensor:
    """``mu + exp(logvar / 2) * eta`` when sampling, ``mu`` otherwise."""
    if not sample:
        return mu
    if eta is None:
        eta = torch.randn(mu.shape, generator=generator, dtype=mu.dtype)
    std = torch.exp(0.5 * logvar)
    return mu + torch.where(std > 0, std * eta, torch.zeros_like(mu))


def vae_loss(x, logits, mu, logvar, beta: float):
    """Batch loss ``-a + beta * sum_i b_i``.

    ``a`` is the batch-averaged log-likelihood (negative binary cross-entropy
    with logits summed over cells) and ``b`` the per-latent KL terms.
    """
    x = x.reshape(logits.shape).to(logits.dtype)
    n = logits.shape[0]
    bce = F.binary_cross_entropy_with_logits(logits, x, reduction="sum")
    a = -bce / n
    b = 0.5 * (torch.exp(logvar) + mu * mu - logvar - 1.0).mean(dim=0)
    return -a + beta * b.sum(), a, b


def _fan_in(weight: torch.Tensor) -> int:
    return weight.shape[1] * int(np.prod(weight.shape[2:])) if weight.ndim > 1 else weight.shape[0]


def _fan_out(weight: torch.Tensor) -> int:
    return weight.shape[0] * int(np.prod(weight.shape[2:]))


def init_default(model: nn.Module, generator: torch.Generator) -> None:
    """Uniform ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))`` for weights and biases."""
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
                bound = 1.0 / math.sqrt(_fan_in(module.weight))
                nn.init.uniform_(module.weight, -bound, bound, generator=generator)
                nn.init.uniform_(module.bias, -bound, bound, generator=generator)


def init_xavier(model: nn.Module, generator: torch.Generator) -> None:
    """Xavier-uniform weights ``U(+-sqrt(6 / (fan_in + fan_out)))``, zero biases."""
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
                bound = math.sqrt(6.0 / (_fan_in(module.weight) + _fan_out(module.weight)))
                nn.init.uniform_(module.weight, -bound, bound, generator=generator)
                nn.init.zeros_(module.bias)


def build_model(config: VaeConfig, generator: torch.Generator, scheme: str = "default") -> BetaVAE:
    model = BetaVAE(config)
    {"default": init_default, "xavier": init_xavier}[scheme](model, generator)
    return model


def make_optimizer(model: nn.Module, settings: AdamSettings = AdamSettings()) -> torch.optim.Adam:
    # torch's Adam adds weight_decay * param to the gradient (L2, not decoupled)
    return torch.optim.Adam(model.parameters(), lr=settings.lr, betas=settings.betas,
                            eps=settings.eps, weight_decay=settings.weight_decay)


def train_batch(model: BetaVAE, optimizer: torch.optim.Optimizer, batch, generator: torch.Generator) -> float:
    """One Adam step on ``batch``; returns the loss before the step."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    model.train()
    x = model._as_batch(batch)
    logits, mu, logvar = model(x, generator=generator)
    loss, _, _ = vae_loss(x, logits, mu, logvar, model.config.beta)
    if not torch.isfinite(loss):
        raise TrainingError(
            f"non-finite loss {loss.item()} (mu range [{mu.min().item():.3g}, {mu.max().item():.3g}], "
            f"logvar range [{logvar.min().item():.3g}, {logvar.max().item():.3g}])")
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return float(loss.item())


@torch.no_grad()
def evaluate_loss(model: BetaVAE, patterns: np.ndarray, batch_size: int = 256) -> float:
    """Mean per-sample loss in eval mode (decoder fed with ``z = mu``)."""
    model.eval()
    total, n = 0.0, 0
    for start in range(0, len(patterns), batch_size):
        x = model._as_batch(patterns[start:start + batch_size])
        logits, mu, logvar = model(x)
        loss, _, _ = vae_loss(x, logits, mu, logvar, model.config.beta)
        total += float(loss) * len(x)
        n += len(x)
    return total / n if n else float("nan")


@torch.no_grad()
def encode_mean(model: BetaVAE, patterns, batch_size: int = 1) -> np.ndarray:
    """Latent means of ``patterns`` as float64 rows.

    The default of one pattern per forward pass makes every encoding
    independent of which other patterns are encoded alongside it.
    """
    model.eval()
    patterns = np.asarray(patterns, dtype=np.float32)
    if patterns.ndim == 2:
        patterns = patterns[None]
    out = [model.encode(patterns[s:s + batch_size])[0].double().numpy()
           for s in range(0, len(patterns), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, model.config.latent_dim))


def augment(pattern: np.ndarray, rng: np.random.Generator,
            translate_prob: float = 0.3, rotate_prob: float = 0.3, rotate_max: float = 40.0,
            flip_prob: float = 0.2) -> np.ndarray:
    """Random toroidal translation, rotation and flips of a square pattern."""
    a = np.asarray(pattern, dtype=np.float32)
    S = a.shape[0]
    if rng.random() < translate_prob:
        half = S // 2
        dy, dx = rng.integers(-half, half + 1, size=2)
        a = np.roll(a, (int(dy), int(dx)), axis=(0, 1))
    if rng.random() < rotate_prob:
        angle = rng.uniform(-rotate_max, rotate_max)
        a = ndimage.rotate(a, angle, reshape=False, order=1, mode="grid-wrap")
    if rng.random() < flip_prob:
        a = a[:, ::-1]
    if rng.random() < flip_prob:
        a = a[::-1, :]
    return np.clip(a, 0.0, 1.0).astype(np.float32)


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float


def train_epoch(model: BetaVAE, optimizer, patterns: np.ndarray, rng: np.random.Generator,
                generator: torch.Generator, weights: np.ndarray | None = None,
                batch_size: int = BATCH_SIZE, augmentation: bool = True) -> float:
    """One pass of ``len(patterns)`` draws; returns the mean pre-step loss.

    With ``weights`` the draws are made with replacement from that
    distribution, otherwise the data is shuffled.
    """
    n = len(patterns)
    if weights is None:
        order = rng.permutation(n)
    else:
        order = rng.choice(n, size=n, replace=True, p=weights)
    total = 0.0
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        batch = np.stack([augment(patterns[i], rng) if augmentation else patterns[i] for i in idx])
        total += train_batch(model, optimizer, batch, generator) * len(idx)
    return total / n


def fit(model: BetaVAE, train: np.ndarray, val: np.ndarray, epochs: int, rng: np.random.Generator,
        keep_best: bool = True, augmentation: bool = True, batch_size: int = BATCH_SIZE,
        optimizer=None) -> list[EpochLog]:
    """Train for ``epochs`` epochs; with ``keep_best`` restore the lowest-validation-loss state."""
    from .rng import torch_generator

    if len(train) == 0:
        raise ValueError("empty training set")
    optimizer = optimizer or make_optimizer(model)
    generator = torch_generator(rng)
    log = []
    best, best_state = math.inf, None
    for epoch in range(1, epochs + 1):
        tl = train_epoch(model, optimizer, train, rng, generator, batch_size=batch_size,
                         augmentation=augmentation)
        vl = evaluate_loss(model, val) if len(val) else float("nan")
        log.append(EpochLog(epoch, tl, vl))
        if keep_best and len(val) and vl < best:
            best = vl
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    if keep_best and best_state is not None:
        model.load_state_dict(best_state)
    return log


MAGIC = b"LVAE"
VERSION = 1
_HEADER = struct.Struct("<4sHIIIId")


def save_checkpoint(path, model: BetaVAE) -> None:
    cfg = model.config
    state = model.state_dict()
    chunks = [_HEADER.pack(MAGIC, VERSION, cfg.input_size, cfg.latent_dim, cfg.channels, cfg.hidden, cfg.beta),
              struct.pack("<I", len(state))]
    for name, tensor in state.items():
        raw = name.encode()
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack("<B", tensor.ndim) + struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        chunks.append(tensor.detach().to(torch.float32).numpy().astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> BetaVAE:
    data = Path(path).read_bytes()
    magic, version, S, d, c, h, beta = _HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise ValueError(f"{path}: not a version-{VERSION} LVAE checkpoint")
    model = BetaVAE(VaeConfig(input_size=S, latent_dim=d, beta=beta, channels=c, hidden=h))
    off = _HEADER.size
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    state = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + n].decode()
        off += n
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f4", count=size, offset=off).reshape(shape)
        off += 4 * size
        state[name] = torch.from_numpy(arr.astype(np.float32))
    model.load_state_dict(state)
    model.eval()
    return model
