"""End-to-end autoencoder for two-user downlink NOMA over Rayleigh fading.

One encoder maps both users' bits plus (possibly quantized) CSI to a complex
symbol; the batch is scaled to average power ``P``; each user's decoder sees
its own received sample and its true channel and outputs bit probabilities.
"""
from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
import struct
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import neuralnet as nn
from .channel import ChannelRealization, FadingConfig, complex_normal, noise_sigma, sample_channel
from .errors import ConfigError, DegenerateEncoderError, StructuralError, TrainingDivergence
from .quantizer import QuantizedCsi, QuantizerCodebook, codebook_from_text, codebook_to_text, quantize_csi

PROB_CLIP = 1e-12


@dataclass(frozen=True)
class BitConfig:
    l1: int = 2
    l2: int = 2

    def __post_init__(self):
        for name in ("l1", "l2"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError("must be a positive integer", name)

    def length(self, k):
        return self.l1 if k == 1 else self.l2


@dataclass(frozen=True)
class LossWeights:
    w: float = 10.0
    snr_set: tuple = (1.0, 5.0, 10.0, 15.0, 20.0)

    def __post_init__(self):
        if not self.w >= 1:
            raise ConfigError("fairness weight must be >= 1", "w")
        object.__setattr__(self, "snr_set", tuple(float(g) for g in self.snr_set))
        if any(not g > 0 for g in self.snr_set):
            raise ConfigError("training SNRs must be positive", "snr_set")


MODES = ("fixed_snr", "multi_snr")


@dataclass(frozen=True)
class TrainConfig:
    """Training budget.

    One epoch is ``steps_per_epoch`` Adam steps, each on ``batch_size``
    samples taken from a fixed pool of ``n_train`` (bits, channel) samples.
    The pool is reshuffled each time it is used up and noise is redrawn at
    every step. The learning rate follows ``schedule`` in epochs.
    """

    n_train: int = 40_000
    n_epochs: int = 10_000
    train_snr_db: float = 10.0
    schedule: nn.TrainSchedule = nn.TrainSchedule(0.002, 0.95, 100)
    batch_size: int = 128
    master_seed: int = 0
    mode: str = "fixed_snr"
    steps_per_epoch: int = 8

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}", "mode")
        for name in ("n_train", "n_epochs", "batch_size", "steps_per_epoch"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError("must be a positive integer", name)
        if self.batch_size > self.n_train:
            raise ConfigError("batch larger than the training pool", "batch_size")


@dataclass
class AeSystem:
    encoder: nn.ModelParams
    decoder1: nn.ModelParams
    decoder2: nn.ModelParams
    bits: BitConfig = BitConfig()
    power: float = 1.0
    quantizers: tuple | None = None
    # frozen deployment scale; None until calibrate_power_scale has run
    power_scale: float | None = None

    @property
    def csi_mode(self):
        return "perfect" if self.quantizers is None else "quantized"

    def decoder(self, k):
        if k not in (1, 2):
            raise StructuralError(f"user index must be 1 or 2, got {k}")
        return self.decoder1 if k == 1 else self.decoder2

    def copy(self):
        return replace(self, encoder=self.encoder.copy(), decoder1=self.decoder1.copy(),
                       decoder2=self.decoder2.copy())


def build_system(bits=BitConfig(), rng=None, power=1.0, quantizers=None, width=32, n_hidden=8,
                 residual=True):
    rng = np.random.default_rng(0) if rng is None else rng
    if not power > 0:
        raise ConfigError("must be positive", "power")
    if quantizers is not None and len(quantizers) != 2:
        raise ConfigError("need one codebook per user", "quantizers")
    enc = nn.init_params(nn.mlp_specs(bits.l1 + bits.l2 + 4, 2, width, n_hidden, "linear", residual), rng)
    d1 = nn.init_params(nn.mlp_specs(4, bits.l1, width, n_hidden, "sigmoid", residual), rng)
    d2 = nn.init_params(nn.mlp_specs(4, bits.l2, width, n_hidden, "sigmoid", residual), rng)
    return AeSystem(enc, d1, d2, bits, float(power), None if quantizers is None else tuple(quantizers))


# -- building blocks ---------------------------------------------------------------

def transmitter_csi(sys, h):
    """What the encoder sees: the true channel or its quantized version."""
    if sys.quantizers is None:
        return h
    return quantize_csi(h, *sys.quantizers)


def encoder_input(bits1, bits2, csi):
    bits1 = np.atleast_2d(np.asarray(bits1, dtype=np.float64))
    bits2 = np.atleast_2d(np.asarray(bits2, dtype=np.float64))
    if isinstance(csi, QuantizedCsi):
        g1, g2 = csi.h1_hat, csi.h2_hat
    else:
        g1, g2 = csi.h1, csi.h2
    n = bits1.shape[0]
    g1 = np.broadcast_to(np.asarray(g1, dtype=complex), (n,))
    g2 = np.broadcast_to(np.asarray(g2, dtype=complex), (n,))
    # bits enter as +-1
    return np.column_stack([2 * bits1 - 1, 2 * bits2 - 1, g1.real, g1.imag, g2.real, g2.imag])


def _check_csi(sys, csi):
    if sys.quantizers is None and isinstance(csi, QuantizedCsi):
        raise StructuralError("perfect-CSI system was given quantized CSI")
    if sys.quantizers is not None and not isinstance(csi, QuantizedCsi):
        raise StructuralError("quantized-CSI system needs QuantizedCsi input (see transmitter_csi)")


def encode_raw(sys, bits1, bits2, csi):
    """Encoder forward pass; returns ``(z, cache)`` with ``z`` of shape (batch, 2)."""
    _check_csi(sys, csi)
    x = encoder_input(bits1, bits2, csi)
    if x.shape[1] != sys.encoder.specs[0].in_dim:
        raise StructuralError(f"encoder expects {sys.encoder.specs[0].in_dim} inputs, got {x.shape[1]}")
    return nn.forward(sys.encoder, x)


def encode(sys, bits1, bits2, csi):
    """Pre-normalisation complex symbols for the given bits and CSI."""
    z, _ = encode_raw(sys, bits1, bits2, csi)
    out = z[:, 0] + 1j * z[:, 1]
    return complex(out[0]) if np.ndim(bits1) == 1 else out


def normalize_power(z, P):
    """Scale a batch so its average power is exactly ``P``; returns ``(x, scale)``.

    ``z`` is complex (batch,) or real (batch, 2).
    """
    z = np.asarray(z)
    if z.size == 0:
        raise DegenerateEncoderError("empty batch")
    power = np.mean(np.abs(z) ** 2) if np.iscomplexobj(z) or z.ndim == 1 else np.mean(np.sum(z * z, axis=1))
    if not power > 0:
        raise DegenerateEncoderError("encoder output is all zero")
    scale = math.sqrt(P / power)
    return z * scale, scale


def decoder_input(y, h):
    y = np.atleast_1d(y)
    h = np.broadcast_to(np.atleast_1d(h), y.shape)
    return np.column_stack([y.real, y.imag, h.real, h.imag])


def decode(sys, k, y, h):
    """Bit probabilities of user ``k`` from its received sample and channel."""
    p, _ = nn.forward(sys.decoder(k), decoder_input(y, h))
    return p[0] if np.ndim(y) == 0 else p


def bce_loss(probs, target_bits):
    p = np.clip(np.asarray(probs, dtype=np.float64), PROB_CLIP, 1 - PROB_CLIP)
    b = np.asarray(target_bits, dtype=np.float64)
    return float(-np.mean(b * np.log(p) + (1 - b) * np.log(1 - p)))


def _bce_grad(probs, target_bits):
    # d(mean BCE)/dp, zero where the clip is active
    p = probs
    b = target_bits
    inside = (p > PROB_CLIP) & (p < 1 - PROB_CLIP)
    pc = np.clip(p, PROB_CLIP, 1 - PROB_CLIP)
    return np.where(inside, (pc - b) / (pc * (1 - pc)), 0.0) / p.size


def fairness_loss(L1, L2, w):
    return w * max(L1, L2) + min(L1, L2)


def _fairness_weights(L1, L2, w):
    # subgradient: ties give the larger weight to user 1
    return (w, 1.0) if L1 >= L2 else (1.0, w)


def snr_weights(snr_set):
    g = np.asarray(snr_set, dtype=np.float64)
    if g.size == 0 or np.any(g <= 0):
        raise ConfigError("training SNRs must be positive", "snr_set")
    return g / g.sum()


# -- batches and the differentiable pipeline --------------------------------------------

@dataclass
class Batch:
    """Everything random about one training batch; noise is unit-variance per dimension."""

    bits1: np.ndarray
    bits2: np.ndarray
    h: ChannelRealization
    noise1: np.ndarray
    noise2: np.ndarray

    def __len__(self):
        return self.bits1.shape[0]


def draw_batch(bits, fading, n, rng):
    b1 = rng.integers(0, 2, (n, bits.l1)).astype(np.float64)
    b2 = rng.integers(0, 2, (n, bits.l2)).astype(np.float64)
    h = sample_channel(fading, rng, n)
    return Batch(b1, b2, h, complex_normal(rng, 1.0, n), complex_normal(rng, 1.0, n))


@dataclass
class PassResult:
    loss: float
    user_losses: list
    grads: tuple
    power: float
    scale: float


def loss_and_grads(sys, batch, noise_stds, loss_weights, w, need_grads=True):
    """Forward + backward through encoder, power scaling, channel and both decoders.

    ``noise_stds[i]`` is the per-dimension noise std of term ``i``; the total
    loss is ``sum_i loss_weights[i] * fairness_loss(L1(i), L2(i), w)``. The same
    unit noise draws are reused for every term.
    """
    csi = transmitter_csi(sys, batch.h)
    z, enc_cache = encode_raw(sys, batch.bits1, batch.bits2, csi)
    B = z.shape[0]
    m = float(np.mean(np.sum(z * z, axis=1)))
    if not np.isfinite(m):
        raise TrainingDivergence("non-finite encoder output", layer=len(sys.encoder.specs) - 1)
    if not m > 0:
        raise DegenerateEncoderError("encoder output is all zero")
    s = math.sqrt(sys.power / m)
    x = s * (z[:, 0] + 1j * z[:, 1])
    power = float(np.mean(np.abs(x) ** 2))

    gx = np.zeros((B, 2))
    dec_grads = [np.zeros_like(sys.decoder1.theta), np.zeros_like(sys.decoder2.theta)]
    total = 0.0
    user_losses = []
    for sd, lw in zip(noise_stds, loss_weights):
        per_user = []
        for k, h, noise, bits in ((1, batch.h.h1, batch.noise1, batch.bits1),
                                  (2, batch.h.h2, batch.noise2, batch.bits2)):
            y = h * x + sd * noise
            p, cache = nn.forward(sys.decoder(k), decoder_input(y, h))
            per_user.append((k, h, bits, p, cache))
        L1 = bce_loss(per_user[0][3], per_user[0][2])
        L2 = bce_loss(per_user[1][3], per_user[1][2])
        user_losses.append((L1, L2))
        total += lw * fairness_loss(L1, L2, w)
        if not need_grads:
            continue
        uw = _fairness_weights(L1, L2, w)
        for (k, h, bits, p, cache), u in zip(per_user, uw):
            g_dec, g_in = nn.backward(sys.decoder(k), cache, lw * u * _bce_grad(p, bits))
            dec_grads[k - 1] += g_dec
            # y = h x: dL/dx_re = h_re g_re + h_im g_im, dL/dx_im = -h_im g_re + h_re g_im
            gr, gi = g_in[:, 0], g_in[:, 1]
            gx[:, 0] += h.real * gr + h.imag * gi
            gx[:, 1] += -h.imag * gr + h.real * gi
    if not np.isfinite(total):
        raise TrainingDivergence("non-finite loss")
    grads = None
    if need_grads:
        # x = s z with s = sqrt(P / mean|z|^2)
        gz = s * gx - (s * float(np.sum(gx * z)) / (m * B)) * z
        g_enc, _ = nn.backward(sys.encoder, enc_cache, gz)
        grads = (g_enc, dec_grads[0], dec_grads[1])
    return PassResult(float(total), user_losses, grads, power, s)


def multi_snr_loss(sys, batch, snr_set, w, snr_unit="db"):
    """Loss averaged over training SNRs with weights ``gamma_i / sum_j gamma_j``.

    With ``snr_unit="db"`` the entries of ``snr_set`` set the noise level in dB;
    the weights always use the listed numbers as given.
    """
    weights = snr_weights(snr_set)
    stds = [_snr_to_std(g, snr_unit, sys.power) for g in snr_set]
    return loss_and_grads(sys, batch, stds, weights, w, need_grads=False).loss


def _snr_to_std(g, unit, power):
    if unit == "db":
        return noise_sigma(g, power)
    if unit == "linear":
        return noise_sigma(10 * math.log10(g), power)
    raise ConfigError(f"unknown SNR unit {unit!r}", "snr_unit")


# -- training --------------------------------------------------------------------------

@dataclass
class TrainHistory:
    epoch: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    batch_power: list = field(default_factory=list)

    def write_csv(self, path_or_fh):
        rows = [("epoch", "loss", "lr")] + [(e, f"{l:.12g}", f"{r:.12g}")
                                             for e, l, r in zip(self.epoch, self.loss, self.lr)]
        if hasattr(path_or_fh, "write"):
            csv.writer(path_or_fh, lineterminator="\n").writerows(rows)
        else:
            with open(path_or_fh, "w", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerows(rows)


def train(sys, cfg=TrainConfig(), fading=FadingConfig(), weights=LossWeights(), snr_unit="db",
          callback=None):
    """Train ``sys`` in place; returns ``(sys, history)``.

    All randomness (training pool, batch order, noise) comes from
    ``cfg.master_seed``, so equal configs give bit-identical results.
    """
    rng = np.random.default_rng(cfg.master_seed)
    pool = draw_batch(sys.bits, fading, cfg.n_train, rng)
    if cfg.mode == "fixed_snr":
        stds = [noise_sigma(cfg.train_snr_db, sys.power)]
        lweights = [1.0]
    else:
        stds = [_snr_to_std(g, snr_unit, sys.power) for g in weights.snr_set]
        lweights = list(snr_weights(weights.snr_set))
    hist = TrainHistory()
    order = rng.permutation(cfg.n_train)
    cursor = 0
    nets = (sys.encoder, sys.decoder1, sys.decoder2)
    for epoch in range(cfg.n_epochs):
        lr = cfg.schedule.lr(epoch)
        epoch_loss = 0.0
        for _ in range(cfg.steps_per_epoch):
            if cursor + cfg.batch_size > cfg.n_train:
                order = rng.permutation(cfg.n_train)
                cursor = 0
            idx = order[cursor:cursor + cfg.batch_size]
            cursor += cfg.batch_size
            n = idx.size
            batch = Batch(pool.bits1[idx], pool.bits2[idx], ChannelRealization(pool.h.h1[idx], pool.h.h2[idx]),
                          complex_normal(rng, 1.0, n), complex_normal(rng, 1.0, n))
            try:
                # overflow shows up as a non-finite loss or gradient and is reported below
                with np.errstate(over="ignore", invalid="ignore"):
                    res = loss_and_grads(sys, batch, stds, lweights, weights.w)
                for net, g in zip(nets, res.grads):
                    nn.check_finite(net, g, epoch)
            except TrainingDivergence as exc:
                raise TrainingDivergence(f"training diverged at epoch {epoch}: {exc}", layer=exc.layer,
                                         epoch=epoch) from exc
            for net, g in zip(nets, res.grads):
                nn.adam_step(net, g, lr, epoch)
            epoch_loss += res.loss
            hist.batch_power.append(res.power)
            if callback is not None:
                callback(epoch, res)
        hist.epoch.append(epoch)
        hist.loss.append(epoch_loss / cfg.steps_per_epoch)
        hist.lr.append(lr)
    sys.power_scale = None
    return sys, hist


# -- deployment ------------------------------------------------------------------------

def all_bit_combinations(bits):
    combos = np.array(list(itertools.product((0, 1), repeat=bits.l1 + bits.l2)), dtype=np.float64)
    return combos[:, :bits.l1], combos[:, bits.l1:]


def calibrate_power_scale(sys, fading=FadingConfig(), rng=None, n_channels=10_000):
    """Freeze the transmit scale to sqrt(P / average power) of the super-constellation.

    The average runs over every bit combination and ``n_channels`` channel draws.
    """
    rng = np.random.default_rng(12345) if rng is None else rng
    b1, b2 = all_bit_combinations(sys.bits)
    K = b1.shape[0]
    h = sample_channel(fading, rng, n_channels)
    hh = ChannelRealization(np.repeat(h.h1, K), np.repeat(h.h2, K))
    z, _ = encode_raw(sys, np.tile(b1, (n_channels, 1)), np.tile(b2, (n_channels, 1)), transmitter_csi(sys, hh))
    power = float(np.mean(np.sum(z * z, axis=1)))
    if not power > 0:
        raise DegenerateEncoderError("encoder output is all zero")
    sys.power_scale = math.sqrt(sys.power / power)
    return sys.power_scale


def transmit(sys, bits1, bits2, h):
    """Deployed transmitter: encoder output times the frozen power scale."""
    if sys.power_scale is None:
        raise StructuralError("call calibrate_power_scale before transmitting")
    z, _ = encode_raw(sys, bits1, bits2, transmitter_csi(sys, h))
    return sys.power_scale * (z[:, 0] + 1j * z[:, 1])


@dataclass
class BerPoint:
    snr_db: float
    ber_ue1: float
    ber_ue2: float
    trials: int
    seed: int | None = None

    @property
    def ber_avg(self):
        return 0.5 * (self.ber_ue1 + self.ber_ue2)


def evaluate_ber(sys, snr_grid_db, n_test, fading=FadingConfig(), rng=None, seed=None, chunk=50_000):
    """Hard-decision BER per user on fresh bits, channels and noise at each SNR."""
    if n_test < 10**4:
        raise ConfigError("use at least 1e4 test samples", "n_test")
    if rng is None:
        rng = np.random.default_rng(seed)
    if sys.power_scale is None:
        calibrate_power_scale(sys, fading)
    points = []
    for snr_db in snr_grid_db:
        sd = noise_sigma(snr_db, sys.power)
        errs = [0, 0]
        done = 0
        while done < n_test:
            n = min(chunk, n_test - done)
            batch = draw_batch(sys.bits, fading, n, rng)
            x = transmit(sys, batch.bits1, batch.bits2, batch.h)
            for k, h, noise, bits in ((1, batch.h.h1, batch.noise1, batch.bits1),
                                      (2, batch.h.h2, batch.noise2, batch.bits2)):
                p = decode(sys, k, h * x + sd * noise, h)
                errs[k - 1] += int(np.count_nonzero((p > 0.5) != (bits > 0.5)))
            done += n
        points.append(BerPoint(float(snr_db), errs[0] / (n_test * sys.bits.l1),
                               errs[1] / (n_test * sys.bits.l2), int(n_test), seed))
    return points


def export_constellation(sys, h1, h2, fading=FadingConfig()):
    """All ``2^(l1+l2)`` transmit symbols at a given channel, with their labels."""
    if sys.power_scale is None:
        calibrate_power_scale(sys, fading)
    b1, b2 = all_bit_combinations(sys.bits)
    K = b1.shape[0]
    h = ChannelRealization(np.full(K, complex(h1)), np.full(K, complex(h2)))
    x = transmit(sys, b1, b2, h)
    records = []
    for i in range(K):
        records.append({
            "bits1": "".join(str(int(v)) for v in b1[i]),
            "bits2": "".join(str(int(v)) for v in b2[i]),
            "h1": complex(h1), "h2": complex(h2), "x": complex(x[i]),
        })
    return records


CONSTELLATION_FIELDS = ("bits1", "bits2", "h1_re", "h1_im", "h2_re", "h2_im", "x_re", "x_im")


def write_constellation_csv(records, path_or_fh):
    rows = [CONSTELLATION_FIELDS]
    for r in records:
        rows.append((r["bits1"], r["bits2"], *(f"{v:.12g}" for v in (
            r["h1"].real, r["h1"].imag, r["h2"].real, r["h2"].imag, r["x"].real, r["x"].imag))))
    if hasattr(path_or_fh, "write"):
        csv.writer(path_or_fh, lineterminator="\n").writerows(rows)
    else:
        with open(path_or_fh, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)


# -- checkpoints ------------------------------------------------------------------------

SYSTEM_MAGIC = b"NOMAAE-SYS"


def dump_system(sys, fh):
    meta = {
        "bits": asdict(sys.bits), "power": sys.power, "power_scale": sys.power_scale,
        "quantizers": None if sys.quantizers is None else [codebook_to_text(c) for c in sys.quantizers],
    }
    blob = json.dumps(meta, sort_keys=True).encode()
    fh.write(SYSTEM_MAGIC)
    fh.write(struct.pack("<I", len(blob)))
    fh.write(blob)
    for net in (sys.encoder, sys.decoder1, sys.decoder2):
        nn.dump_params(net, fh)


def load_system(fh):
    if fh.read(len(SYSTEM_MAGIC)) != SYSTEM_MAGIC:
        raise StructuralError("not an AE system checkpoint")
    (n,) = struct.unpack("<I", fh.read(4))
    meta = json.loads(fh.read(n).decode())
    nets = [nn.load_params(fh) for _ in range(3)]
    q = meta["quantizers"]
    return AeSystem(*nets, BitConfig(**meta["bits"]), meta["power"],
                    None if q is None else tuple(codebook_from_text(t) for t in q), meta["power_scale"])


def save_system(sys, path):
    with open(path, "wb") as fh:
        dump_system(sys, fh)


def load_system_file(path):
    with open(path, "rb") as fh:
        return load_system(fh)


def system_fingerprint(sys):
    buf = io.BytesIO()
    dump_system(sys, buf)
    return hashlib.sha256(buf.getvalue()).hexdigest()
