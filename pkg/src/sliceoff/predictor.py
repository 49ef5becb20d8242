"""Self-attention traffic forecaster plus naive baselines.

Encoder layers apply probsparse multi-head self-attention (full attention
rows only for the queries scoring highest on max-minus-mean dot products,
mean-of-values for the rest), then a width-3 convolution, ELU, and stride-2
max-pooling that halves the sequence between layers. The decoder runs
masked self-attention over the recent window plus a zero placeholder block,
cross-attends to the encoder output, and a small regression head emits the
next long slot's per-short-slot counts.

Inputs and targets are scaled by a fixed count scale; per-position features
are (scaled count, sin/cos of slot-of-day, region one-hot).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict, field

import numpy as np
import torch
import torch.nn as nn

from .traffic import TrafficSeries


@dataclass
class PredictorConfig:
    input_window_slots: int = 48     # encoder history length
    horizon_slots: int = 6           # short slots predicted (one long slot)
    model_dim: int = 32
    num_heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 1
    top_u_factor: float = 5.0        # u = ceil(factor * ln L), capped at L
    train_epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 1e-3
    patience: int = 10
    val_fraction: float = 0.2
    count_scale: float = 10.0
    window_stride: int = 1           # subsample window starts for faster training

    def __post_init__(self):
        if min(self.input_window_slots, self.horizon_slots, self.model_dim,
               self.num_heads, self.encoder_layers, self.decoder_layers,
               self.train_epochs, self.batch_size) < 1:
            raise ValueError("all size/count fields must be positive")
        if self.model_dim % self.num_heads != 0:
            raise ValueError("model_dim must be divisible by num_heads")
        if self.top_u_factor <= 0 or self.learning_rate <= 0:
            raise ValueError("top_u_factor and learning_rate must be positive")


def sparsity_measurement(queries: torch.Tensor, keys: torch.Tensor) -> torch.Tensor:
    """Per-query max-minus-mean of scaled dot products against all keys."""
    scale = 1.0 / math.sqrt(queries.shape[-1])
    scores = torch.matmul(queries, keys.transpose(-2, -1)) * scale
    return scores.max(dim=-1).values - scores.mean(dim=-1)


def probsparse_attention(queries: torch.Tensor, keys: torch.Tensor,
                         values: torch.Tensor, u: int) -> torch.Tensor:
    """Scaled dot-product attention computed fully for the top-u queries by
    sparsity measurement; the remaining query rows output the mean value row.
    Shapes (..., L, E); with u >= L this is exactly dense attention."""
    if u <= 0:
        raise ValueError(f"u must be positive, got {u}")
    lq = queries.shape[-2]
    scale = 1.0 / math.sqrt(queries.shape[-1])
    if u >= lq:
        attn = torch.softmax(torch.matmul(queries, keys.transpose(-2, -1)) * scale, dim=-1)
        return torch.matmul(attn, values)
    measure = sparsity_measurement(queries, keys)
    top = torch.topk(measure, u, dim=-1).indices                       # (..., u)
    q_sel = torch.gather(queries, -2, top.unsqueeze(-1).expand(*top.shape, queries.shape[-1]))
    attn = torch.softmax(torch.matmul(q_sel, keys.transpose(-2, -1)) * scale, dim=-1)
    out_sel = torch.matmul(attn, values)                               # (..., u, E)
    out = values.mean(dim=-2, keepdim=True).expand(*queries.shape[:-1], values.shape[-1])
    return out.scatter(-2, top.unsqueeze(-1).expand(*top.shape, values.shape[-1]), out_sel)


class MultiHeadAttention(nn.Module):
    """Shared projection block for the three attention flavors used here."""

    def __init__(self, d_model: int, n_heads: int, kind: str, top_u_factor: float = 5.0):
        super().__init__()
        if kind not in ("probsparse", "dense", "causal"):
            raise ValueError(kind)
        self.kind = kind
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.top_u_factor = top_u_factor
        self.w_q = nn.Linear(d_model, d_model)
        self.w_k = nn.Linear(d_model, d_model)
        self.w_v = nn.Linear(d_model, d_model)
        self.w_o = nn.Linear(d_model, d_model)

    def _split(self, x):
        b, l, _ = x.shape
        return x.view(b, l, self.n_heads, self.d_head).transpose(1, 2)

    def forward(self, xq, xk, xv):
        q, k, v = self._split(self.w_q(xq)), self._split(self.w_k(xk)), self._split(self.w_v(xv))
        lq = q.shape[-2]
        if self.kind == "probsparse":
            u = min(lq, max(1, math.ceil(self.top_u_factor * math.log(max(lq, 2)))))
            out = probsparse_attention(q, k, v, u)
        else:
            scale = 1.0 / math.sqrt(self.d_head)
            scores = torch.matmul(q, k.transpose(-2, -1)) * scale
            if self.kind == "causal":
                mask = torch.triu(torch.ones(lq, k.shape[-2], dtype=torch.bool,
                                             device=q.device), diagonal=1)
                scores = scores.masked_fill(mask, float("-inf"))
            out = torch.matmul(torch.softmax(scores, dim=-1), v)
        b = out.shape[0]
        out = out.transpose(1, 2).contiguous().view(b, lq, self.n_heads * self.d_head)
        return self.w_o(out)


class EncoderLayer(nn.Module):
    """Attention block, then conv(k=3, same) -> ELU -> maxpool(stride 2):
    the sequence length goes from L to ceil(L/2)."""

    def __init__(self, d_model, n_heads, top_u_factor):
        super().__init__()
        self.attention = MultiHeadAttention(d_model, n_heads, "probsparse", top_u_factor)
        self.norm = nn.LayerNorm(d_model)
        self.conv = nn.Conv1d(d_model, d_model, kernel_size=3, padding=1)
        self.act = nn.ELU()
        self.pool = nn.MaxPool1d(kernel_size=3, stride=2, padding=1)

    def forward(self, x):
        x = self.norm(x + self.attention(x, x, x))
        y = self.conv(x.transpose(1, 2))
        y = self.pool(self.act(y))
        return y.transpose(1, 2)


class DecoderLayer(nn.Module):
    def __init__(self, d_model, n_heads):
        super().__init__()
        self.self_attention = MultiHeadAttention(d_model, n_heads, "causal")
        self.cross_attention = MultiHeadAttention(d_model, n_heads, "dense")
        self.norm1 = nn.LayerNorm(d_model)
        self.norm2 = nn.LayerNorm(d_model)

    def forward(self, x, memory):
        x = self.norm1(x + self.self_attention(x, x, x))
        return self.norm2(x + self.cross_attention(x, memory, memory))


class TrafficModel(nn.Module):
    def __init__(self, cfg: PredictorConfig, n_features: int):
        super().__init__()
        self.cfg = cfg
        d = cfg.model_dim
        self.enc_embed = nn.Linear(n_features, d)
        self.dec_embed = nn.Linear(n_features, d)
        self.encoder = nn.ModuleList(
            EncoderLayer(d, cfg.num_heads, cfg.top_u_factor) for _ in range(cfg.encoder_layers))
        self.decoder = nn.ModuleList(
            DecoderLayer(d, cfg.num_heads) for _ in range(cfg.decoder_layers))
        self.head = nn.Sequential(nn.Linear(d, d), nn.ELU(), nn.Linear(d, 1))

    def forward(self, x_en, x_de):
        h = self.enc_embed(x_en)
        for layer in self.encoder:
            h = layer(h)
        y = self.dec_embed(x_de)
        for layer in self.decoder:
            y = layer(y, h)
        out = self.head(y)[..., 0]            # (B, len(x_de))
        return out[:, -self.cfg.horizon_slots:]


@dataclass
class PredictionBatch:
    """Windows ready for the model: encoder history, decoder input made of
    the most recent slots plus an all-zero placeholder block, and targets."""

    encoder_input: torch.Tensor   # (N, L, F)
    decoder_input: torch.Tensor   # (N, context + horizon, F)
    target: torch.Tensor          # (N, horizon), scaled counts
    start_slots: np.ndarray       # target start index of each window


def _features(series: TrafficSeries, slots_per_day: int, count_scale: float) -> np.ndarray:
    n_regions, n_slots = series.counts.shape
    t = np.arange(n_slots)
    angle = 2.0 * math.pi * (t % slots_per_day) / slots_per_day
    feats = np.zeros((n_regions, n_slots, 3 + n_regions), dtype=np.float32)
    for r in range(n_regions):
        feats[r, :, 0] = series.counts[r] / count_scale
        feats[r, :, 1] = np.sin(angle)
        feats[r, :, 2] = np.cos(angle)
        feats[r, :, 3 + r] = 1.0
    return feats


def build_dataset(series: TrafficSeries, cfg: PredictorConfig) -> PredictionBatch:
    slots_per_day = int(round(86_400.0 / series.slot_duration_s))
    feats = _features(series, slots_per_day, cfg.count_scale)
    n_regions, n_slots, n_f = feats.shape
    L, hor = cfg.input_window_slots, cfg.horizon_slots
    if n_slots < L + hor:
        raise ValueError(f"series of {n_slots} slots is too short for "
                         f"window {L} + horizon {hor}")
    enc, dec, tgt, starts = [], [], [], []
    for r in range(n_regions):
        for t0 in range(L, n_slots - hor + 1, cfg.window_stride):
            enc.append(feats[r, t0 - L:t0])
            context = feats[r, t0 - hor:t0]
            dec.append(np.concatenate([context, np.zeros((hor, n_f), dtype=np.float32)]))
            tgt.append(series.counts[r, t0:t0 + hor] / cfg.count_scale)
            starts.append(t0)
    return PredictionBatch(
        encoder_input=torch.from_numpy(np.stack(enc)),
        decoder_input=torch.from_numpy(np.stack(dec)),
        target=torch.from_numpy(np.stack(tgt).astype(np.float32)),
        start_slots=np.asarray(starts),
    )


@dataclass
class TrainedPredictor:
    model: TrafficModel
    config: PredictorConfig
    region_ids: list
    slots_per_day: int
    loss_curve: list = field(default_factory=list)   # (epoch, train_mse, val_mse)

    def forecast(self, history_counts: np.ndarray) -> np.ndarray:
        """Raw (float) per-region forecasts for the next horizon slots.

        history_counts must start at slot 0 of the timeline and end at the
        forecast origin; slot-of-day phases are derived from array position.
        """
        history_counts = np.atleast_2d(np.asarray(history_counts, dtype=float))
        cfg = self.config
        if history_counts.shape[0] != len(self.region_ids):
            raise ValueError("history must cover every region")
        if history_counts.shape[1] < cfg.input_window_slots:
            raise ValueError(f"need at least {cfg.input_window_slots} slots of history")
        series = TrafficSeries(list(self.region_ids),
                               history_counts[:, -cfg.input_window_slots:],
                               slot_duration_s=86_400.0 / self.slots_per_day)
        feats = _features(series, self.slots_per_day, cfg.count_scale)
        # the reconstruction above indexes time from the window start; rewrite
        # the phase features with the window's true position in the timeline
        offset = history_counts.shape[1] - cfg.input_window_slots
        t = (np.arange(offset, offset + cfg.input_window_slots) % self.slots_per_day)
        angle = 2.0 * math.pi * t / self.slots_per_day
        feats[:, :, 1] = np.sin(angle)
        feats[:, :, 2] = np.cos(angle)
        x_en = torch.from_numpy(feats)
        hor = cfg.horizon_slots
        context = feats[:, -hor:, :]
        placeholder = np.zeros_like(context)
        x_de = torch.from_numpy(np.concatenate([context, placeholder], axis=1))
        self.model.eval()
        with torch.no_grad():
            out = self.model(x_en, x_de).numpy()
        return out * cfg.count_scale

    def predict_counts(self, history_counts: np.ndarray) -> np.ndarray:
        """Integer forecasts for downstream slicing: clamped to >= 0, rounded."""
        raw = self.forecast(history_counts)
        return np.floor(np.clip(raw, 0.0, None) + 0.5).astype(np.int64)


def train_predictor(series: TrafficSeries, cfg: PredictorConfig, seed: int = 0,
                    verbose: bool = False) -> TrainedPredictor:
    """Chronological train/validation split, Adam on MSE, early stopping on
    validation MSE; returns the best-validation model with its loss curve."""
    torch.manual_seed(seed)
    torch.set_num_threads(1)   # keeps runs bit-reproducible regardless of host load
    data = build_dataset(series, cfg)
    if len(data.start_slots) == 0:
        raise ValueError("empty dataset")
    cut = np.quantile(np.unique(data.start_slots), 1.0 - cfg.val_fraction)
    train_idx = np.flatnonzero(data.start_slots < cut)
    val_idx = np.flatnonzero(data.start_slots >= cut)
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise ValueError("chronological split produced an empty side")

    slots_per_day = int(round(86_400.0 / series.slot_duration_s))
    model = TrafficModel(cfg, n_features=3 + series.counts.shape[0])
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng(seed)
    best_val, best_state, best_epoch = math.inf, None, -1
    curve = []
    for epoch in range(cfg.train_epochs):
        model.train()
        order = rng.permutation(train_idx)
        total, count = 0.0, 0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            pred = model(data.encoder_input[idx], data.decoder_input[idx])
            loss = torch.mean((pred - data.target[idx]) ** 2)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
            count += len(idx)
        train_mse = total / count
        val_mse = _dataset_mse(model, data, val_idx, cfg.batch_size)
        curve.append((epoch, train_mse, val_mse))
        if verbose:
            print(f"epoch {epoch}: train {train_mse:.5f} val {val_mse:.5f}")
        if val_mse < best_val - 1e-12:
            best_val, best_epoch = val_mse, epoch
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        elif epoch - best_epoch >= cfg.patience:
            break
    model.load_state_dict(best_state)
    return TrainedPredictor(model=model, config=cfg, region_ids=list(series.region_ids),
                            slots_per_day=slots_per_day, loss_curve=curve)


def _dataset_mse(model, data: PredictionBatch, idx, batch_size: int) -> float:
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for lo in range(0, len(idx), batch_size):
            sel = idx[lo:lo + batch_size]
            pred = model(data.encoder_input[sel], data.decoder_input[sel])
            total += float(torch.sum((pred - data.target[sel]) ** 2))
            count += pred.numel()
    return total / count


def validation_mse_against_baselines(trained: TrainedPredictor,
                                     series: TrafficSeries) -> dict:
    """Model vs naive baselines on the same chronological validation windows,
    in raw count units."""
    cfg = trained.config
    data = build_dataset(series, cfg)
    cut = np.quantile(np.unique(data.start_slots), 1.0 - cfg.val_fraction)
    val_idx = np.flatnonzero(data.start_slots >= cut)
    model_mse = _dataset_mse(trained.model, data, val_idx, cfg.batch_size) * cfg.count_scale ** 2
    target = data.target.numpy()[val_idx] * cfg.count_scale
    last = data.encoder_input.numpy()[val_idx, -1, 0] * cfg.count_scale
    window = data.encoder_input.numpy()[val_idx, -cfg.horizon_slots:, 0] * cfg.count_scale
    last_mse = float(np.mean((target - last[:, None]) ** 2))
    avg_mse = float(np.mean((target - window.mean(axis=1, keepdims=True)) ** 2))
    return {"model": model_mse, "last_value": last_mse, "moving_average": avg_mse}


def naive_predict(history_counts: np.ndarray, kind: str, horizon: int,
                  window: int = 6) -> np.ndarray:
    """last_value repeats the final observation; moving_average repeats the
    mean of the last `window` observations."""
    history_counts = np.atleast_2d(np.asarray(history_counts, dtype=float))
    if history_counts.shape[1] == 0:
        raise ValueError("history must be non-empty")
    if kind == "last_value":
        level = history_counts[:, -1]
    elif kind == "moving_average":
        if window > history_counts.shape[1]:
            raise ValueError("window longer than history")
        level = history_counts[:, -window:].mean(axis=1)
    else:
        raise ValueError(f"unknown naive predictor kind {kind}")
    return np.repeat(level[:, None], horizon, axis=1)


def save_predictor(trained: TrainedPredictor, path):
    torch.save({
        "state_dict": trained.model.state_dict(),
        "config": asdict(trained.config),
        "region_ids": trained.region_ids,
        "slots_per_day": trained.slots_per_day,
        "loss_curve": trained.loss_curve,
    }, path)


def load_predictor(path) -> TrainedPredictor:
    payload = torch.load(path, weights_only=True)
    cfg = PredictorConfig(**payload["config"])
    model = TrafficModel(cfg, n_features=3 + len(payload["region_ids"]))
    model.load_state_dict(payload["state_dict"])
    return TrainedPredictor(model=model, config=cfg, region_ids=list(payload["region_ids"]),
                            slots_per_day=int(payload["slots_per_day"]),
                            loss_curve=[tuple(x) for x in payload["loss_curve"]])


def save_loss_curve(trained: TrainedPredictor, path):
    with open(path, "w") as fh:
        fh.write("epoch,train_mse,val_mse\n")
        for epoch, train_mse, val_mse in trained.loss_curve:
            fh.write(f"{epoch},{train_mse!r},{val_mse!r}\n")
