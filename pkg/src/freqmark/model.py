"""Encoder/decoder watermarking network and checkpoint persistence.

The encoder takes a C x H x W grid plus an m-bit watermark, downsamples it to
an embedding with strided convolutions, and upsamples back to a residual that
is added to the input. The decoder reads m bit probabilities from a
(possibly noised) grid.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .dataio import ScaleInfo
from .errors import ArchError, CorruptCheckpoint, InvalidStd, LengthError, ShapeError, VersionError
from .spectral import NormStats, grid_side, spectral_cell_mask

LEAKY_SLOPE = 0.2
DEFAULT_NOISE_STD = 0.1


def _down(size: int) -> int:
    # 3x3 kernel, stride 2, padding 1
    return (size - 1) // 2 + 1


@dataclass(frozen=True)
class ArchitectureDescriptor:
    grid_h: int
    grid_w: int
    m: int
    bins: int
    series_len: int
    domain: str = "frequency"
    enc_channels: tuple = (32, 64)
    up_channels: tuple | None = None
    dec_channels: tuple = (32, 64, 64)
    bottleneck_dim: int | None = None
    activation: str = "leaky_relu(0.2)"
    residual_gain: float = 1.0
    decoder_pool: str = "flatten"
    input_skip: bool = False

    def __post_init__(self):
        object.__setattr__(self, "enc_channels", tuple(int(c) for c in self.enc_channels))
        object.__setattr__(self, "dec_channels", tuple(int(c) for c in self.dec_channels))
        if self.up_channels is None:
            object.__setattr__(self, "up_channels", tuple(reversed(self.enc_channels[:-1])))
        else:
            object.__setattr__(self, "up_channels", tuple(int(c) for c in self.up_channels))
        if self.domain not in ("frequency", "time"):
            raise ArchError(f"unknown domain {self.domain!r}")
        if self.decoder_pool not in ("flatten", "avg"):
            raise ArchError(f"unknown decoder_pool {self.decoder_pool!r}")
        if self.activation != "leaky_relu(0.2)":
            raise ArchError(f"unsupported activation {self.activation!r}")
        if min(self.grid_h, self.grid_w, self.m, self.bins) < 1:
            raise ArchError("grid dims, m and bins must be >= 1")
        if not self.enc_channels or not self.dec_channels:
            raise ArchError("channel lists must be non-empty")
        if min(self.enc_channels + self.dec_channels + self.up_channels) < 1:
            raise ArchError("all channel widths must be >= 1")
        if len(self.up_channels) != len(self.enc_channels) - 1:
            raise ArchError(
                f"upsampling path needs {len(self.enc_channels) - 1} widths, got {len(self.up_channels)}"
            )
        if self.grid_h * self.grid_w < self.bins:
            raise ArchError("grid smaller than the number of bins")
        if self.bottleneck_dim is None:
            object.__setattr__(self, "bottleneck_dim", self.computed_bottleneck_dim)
        elif self.bottleneck_dim != self.computed_bottleneck_dim:
            raise ArchError(
                f"bottleneck_dim {self.bottleneck_dim} inconsistent with layers ({self.computed_bottleneck_dim})"
            )

    @property
    def in_channels(self) -> int:
        return 2 if self.domain == "frequency" else 1

    @property
    def spatial_sizes(self) -> list[tuple[int, int]]:
        sizes = [(self.grid_h, self.grid_w)]
        for _ in self.enc_channels:
            h, w = sizes[-1]
            sizes.append((_down(h), _down(w)))
        return sizes

    @property
    def computed_bottleneck_dim(self) -> int:
        h, w = self.spatial_sizes[-1]
        return self.enc_channels[-1] * h * w

    def cell_mask(self) -> np.ndarray:
        """C x H x W boolean mask of cells the encoder may modify."""
        if self.domain == "frequency":
            return spectral_cell_mask(self.bins)
        mask = np.zeros(self.grid_h * self.grid_w, dtype=bool)
        mask[: self.bins] = True
        return mask.reshape(1, self.grid_h, self.grid_w)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("enc_channels", "up_channels", "dec_channels"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureDescriptor":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})

    @classmethod
    def for_series(cls, series_len: int, m: int, domain: str = "frequency", **kw) -> "ArchitectureDescriptor":
        bins = series_len // 2 + 1 if domain == "frequency" else series_len
        side = grid_side(bins)
        return cls(grid_h=side, grid_w=side, m=m, bins=bins, series_len=series_len, domain=domain, **kw)


def _act() -> nn.Module:
    return nn.LeakyReLU(LEAKY_SLOPE)


class WatermarkModel(nn.Module):
    """Encoder E, decoder D and the bit-to-plane watermark projection."""

    def __init__(self, arch: ArchitectureDescriptor):
        super().__init__()
        self.arch = arch
        self.train_meta: dict = {}
        C, H, W = arch.in_channels, arch.grid_h, arch.grid_w

        self.watermark_projection = nn.Linear(arch.m, H * W)

        layers, c_in = [], C + 1
        for c in arch.enc_channels:
            layers += [nn.Conv2d(c_in, c, 3, stride=2, padding=1), _act()]
            c_in = c
        self.down = nn.Sequential(*layers)

        sizes = arch.spatial_sizes
        widths = list(arch.up_channels) + [C]
        layers = []
        for i, c in enumerate(widths):
            (h_in, w_in), (h_out, w_out) = sizes[-1 - i], sizes[-2 - i]
            pad = (h_out - 2 * h_in + 1, w_out - 2 * w_in + 1)
            layers.append(nn.ConvTranspose2d(c_in, c, 3, stride=2, padding=1, output_padding=pad))
            if i < len(widths) - 1:
                layers.append(_act())
            c_in = c
        self.up = nn.Sequential(*layers)
        # zero residual at start: encode(x, w) == x
        nn.init.zeros_(self.up[-1].weight)
        nn.init.zeros_(self.up[-1].bias)
        self.skip = None
        if arch.input_skip:
            self.skip = nn.Conv2d(C + 1, C, 3, padding=1)
            nn.init.zeros_(self.skip.weight)
            nn.init.zeros_(self.skip.bias)

        layers, c_in = [], C
        for c in arch.dec_channels:
            layers += [nn.Conv2d(c_in, c, 3, padding=1), _act()]
            c_in = c
        self.decoder_convs = nn.Sequential(*layers)
        head_in = c_in if arch.decoder_pool == "avg" else c_in * H * W
        self.decoder_head = nn.Linear(head_in, arch.m)

        self.register_buffer("mask", torch.from_numpy(arch.cell_mask().astype(np.float32)), persistent=False)

    # -- encoder -------------------------------------------------------------
    def _check(self, x: torch.Tensor, w: torch.Tensor | None = None) -> None:
        a = self.arch
        if tuple(x.shape[1:]) != (a.in_channels, a.grid_h, a.grid_w):
            raise ShapeError(f"grid shape {tuple(x.shape[1:])} does not match architecture")
        if w is not None and w.shape[-1] != a.m:
            raise LengthError(f"watermark has {w.shape[-1]} bits, model expects {a.m}")

    def _stack(self, x: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
        self._check(x, w)
        w = w.to(x.dtype).expand(x.shape[0], -1)
        plane = self.watermark_projection(w).view(-1, 1, self.arch.grid_h, self.arch.grid_w)
        return torch.cat([x, plane], dim=1)

    def bottleneck(self, x: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
        """Embedding of (grid, watermark) from the downsampling path, shape (B, D)."""
        return self.down(self._stack(x, w)).flatten(1)

    def residual(self, x: torch.Tensor, w: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(delta, embedding) for a batch; delta is zero outside the cell mask."""
        stacked = self._stack(x, w)
        e = self.down(stacked).flatten(1)
        h, hw = self.arch.spatial_sizes[-1]
        d = self.up(e.view(-1, self.arch.enc_channels[-1], h, hw))
        if self.skip is not None:
            d = d + self.skip(stacked)
        return d * self.mask.to(x.dtype), e

    def encode(self, x: torch.Tensor, w: torch.Tensor, return_embedding: bool = False):
        d, e = self.residual(x, w)
        xw = x + self.arch.residual_gain * d
        return (xw, e) if return_embedding else xw

    # -- decoder -------------------------------------------------------------
    def decode_logits(self, x: torch.Tensor) -> torch.Tensor:
        self._check(x)
        h = self.decoder_convs(x * self.mask.to(x.dtype))
        h = h.mean(dim=(2, 3)) if self.arch.decoder_pool == "avg" else h.flatten(1)
        return self.decoder_head(h)

    def decode(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.decode_logits(x))


def init_model(arch: ArchitectureDescriptor, seed: int) -> WatermarkModel:
    if not isinstance(arch, ArchitectureDescriptor):
        raise ArchError("arch must be an ArchitectureDescriptor")
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = WatermarkModel(arch)
    model.train_meta = {"init_seed": int(seed)}
    return model


def noise_layer(grid, std: float = DEFAULT_NOISE_STD, seed: int | torch.Generator = 0, mask=None):
    """Add i.i.d. N(0, std^2) noise to the cells selected by ``mask``.

    Accepts a numpy array or a torch tensor and returns the same kind.
    """
    if std < 0:
        raise InvalidStd(f"std must be >= 0, got {std}")
    as_numpy = isinstance(grid, np.ndarray)
    x = torch.from_numpy(grid) if as_numpy else grid
    if std == 0:
        return grid
    gen = seed if isinstance(seed, torch.Generator) else torch.Generator().manual_seed(int(seed))
    noise = torch.randn(x.shape, generator=gen, dtype=x.dtype) * std
    if mask is not None:
        noise = noise * torch.as_tensor(mask, dtype=x.dtype)
    out = x + noise
    return out.numpy() if as_numpy else out


# -- checkpoints --------------------------------------------------------------

MAGIC = b"FREQMARK"
FORMAT_VERSION = 1
_DIGEST = 32


def _stats_to_dict(stats: NormStats) -> dict:
    return {
        "mean_r": [float(v) for v in stats.mean_r],
        "std_r": [float(v) for v in stats.std_r],
        "mean_i": [float(v) for v in stats.mean_i],
        "std_i": [float(v) for v in stats.std_i],
        "epsilon": float(stats.epsilon),
    }


def _stats_from_dict(d: dict) -> NormStats:
    return NormStats(
        mean_r=np.array(d["mean_r"]),
        std_r=np.array(d["std_r"]),
        mean_i=np.array(d["mean_i"]),
        std_i=np.array(d["std_i"]),
        epsilon=d["epsilon"],
    )


def save_checkpoint(model: WatermarkModel, stats: NormStats | None, scale: ScaleInfo, path, extra: dict | None = None) -> None:
    """Write magic, version, JSON header, float32 LE tensors, sha256 trailer."""
    state = model.state_dict()
    tensors = [{"name": k, "shape": list(v.shape)} for k, v in state.items()]
    header = {
        "arch": model.arch.to_dict(),
        "train_meta": model.train_meta,
        "stats": None if stats is None else _stats_to_dict(stats),
        "scale": {"min": float(scale.min), "max": float(scale.max), "method": scale.method},
        "tensors": tensors,
        "extra": extra or {},
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(
        v.detach().cpu().to(torch.float32).contiguous().numpy().astype("<f4").tobytes() for v in state.values()
    )
    body = MAGIC + struct.pack("<II", FORMAT_VERSION, len(hbytes)) + hbytes + payload
    Path(path).write_bytes(body + hashlib.sha256(body).digest())


def read_checkpoint(path) -> tuple[WatermarkModel, NormStats | None, ScaleInfo, dict]:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8 + _DIGEST or raw[: len(MAGIC)] != MAGIC:
        raise CorruptCheckpoint(f"{path}: bad magic or truncated file")
    version, hlen = struct.unpack_from("<II", raw, len(MAGIC))
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    body, digest = raw[:-_DIGEST], raw[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptCheckpoint(f"{path}: checksum mismatch")
    start = len(MAGIC) + 8
    try:
        header = json.loads(body[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: unreadable header ({exc})") from None

    model = WatermarkModel(ArchitectureDescriptor.from_dict(header["arch"]))
    model.train_meta = header["train_meta"]
    offset, state = start + hlen, {}
    for t in header["tensors"]:
        n = int(np.prod(t["shape"], dtype=np.int64))
        if offset + 4 * n > len(body):
            raise CorruptCheckpoint(f"{path}: payload truncated at {t['name']}")
        arr = np.frombuffer(body, dtype="<f4", count=n, offset=offset).reshape(t["shape"])
        state[t["name"]] = torch.from_numpy(arr.astype(np.float32))
        offset += 4 * n
    if offset != len(body):
        raise CorruptCheckpoint(f"{path}: {len(body) - offset} trailing payload bytes")
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise CorruptCheckpoint(f"{path}: {exc}") from None
    stats = None if header["stats"] is None else _stats_from_dict(header["stats"])
    scale = ScaleInfo(**header["scale"])
    return model, stats, scale, header["extra"]


def load_checkpoint(path) -> tuple[WatermarkModel, NormStats | None, ScaleInfo]:
    model, stats, scale, _ = read_checkpoint(path)
    return model, stats, scale
