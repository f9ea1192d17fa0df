"""U-shaped sub-network shared by every learned stage, plus its tooling.

Topology for the default spec (depth 3, channels 32 -> 64 -> 128 -> 128)::

    enc0: conv(in, 32)  conv(32, 32)    -- skip0 --,   2x2 max-pool
    enc1: conv(32, 64)  conv(64, 64)    -- skip1 --,|  2x2 max-pool
    enc2: conv(64, 128) conv(128, 128)  -- skip2 -,||  2x2 max-pool
    mid:  conv(128, 128) conv(128, 128)           |||
    dec2: up x2, cat skip2, conv(256, 128) conv(128, 128)
    dec1: up x2, cat skip1, conv(192, 64)  conv(64, 64)
    dec0: up x2, cat skip0, conv(96, 32)   conv(32, 32)
    head: conv(32, out) then sigmoid (or nothing for the noise head)

Every conv is 3x3, stride 1, padding 1, followed by ReLU except the head.
Upsampling is nearest-neighbour.
"""

from __future__ import annotations

import io
import json
import os
import struct
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import FormatError, NumericError, ShapeError, SizeError, SpecError

# Parameter count of NetworkSpec(in_channels=1, out_channels=1) with defaults.
# A change here means the topology changed.
DEFAULT_PARAM_COUNT = 1_209_025

STAGES = ("ian", "ansn", "nfm", "can", "can_me")

# Smallest normal float32 and the largest float32 below 1.
_SIGMOID_LO = float(np.finfo(np.float32).tiny)
_SIGMOID_HI = 1.0 - 2.0**-24


@dataclass(frozen=True)
class NetworkSpec:
    in_channels: int
    out_channels: int
    base_channels: int = 32
    max_channels: int = 128
    depth: int = 3
    final_activation: str = "sigmoid"

    def __post_init__(self):
        for name in ("in_channels", "out_channels", "base_channels", "max_channels", "depth"):
            if int(getattr(self, name)) <= 0:
                raise SpecError(f"{name} must be positive, got {getattr(self, name)}")
        if self.max_channels < self.base_channels:
            raise SpecError("max_channels must be >= base_channels")
        if self.final_activation not in ("sigmoid", "none"):
            raise SpecError(f"final_activation must be 'sigmoid' or 'none', got {self.final_activation!r}")

    @property
    def level_channels(self) -> list[int]:
        """Channels at encoder levels 0..depth-1 followed by the bottleneck."""
        return [min(self.base_channels * 2**i, self.max_channels) for i in range(self.depth + 1)]

    @property
    def multiple(self) -> int:
        return 2**self.depth


# Stage specs. The noise head is the only one without a sigmoid tail.
IAN_SPEC = NetworkSpec(1, 1)
ANSN_SPEC = NetworkSpec(2, 1, final_activation="none")
NFM_SPEC = NetworkSpec(6, 1)
CAN_SPEC = NetworkSpec(4, 2)
STAGE_SPECS = {"ian": IAN_SPEC, "ansn": ANSN_SPEC, "nfm": NFM_SPEC, "can": CAN_SPEC, "can_me": CAN_SPEC}


def _double_conv(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, 1, 1),
        nn.ReLU(),
        nn.Conv2d(cout, cout, 3, 1, 1),
        nn.ReLU(),
    )


class UNet(nn.Module):
    def __init__(self, spec: NetworkSpec):
        super().__init__()
        self.spec = spec
        ch = spec.level_channels
        self.encoders = nn.ModuleList()
        cin = spec.in_channels
        for level in range(spec.depth):
            self.encoders.append(_double_conv(cin, ch[level]))
            cin = ch[level]
        self.bottleneck = _double_conv(cin, ch[spec.depth])
        self.decoders = nn.ModuleList()
        cin = ch[spec.depth]
        for level in reversed(range(spec.depth)):
            self.decoders.append(_double_conv(cin + ch[level], ch[level]))
            cin = ch[level]
        self.head = nn.Conv2d(cin, spec.out_channels, 3, 1, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        skips = []
        for enc in self.encoders:
            x = enc(x)
            skips.append(x)
            x = F.max_pool2d(x, 2)
        x = self.bottleneck(x)
        for dec in self.decoders:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = dec(torch.cat([x, skips.pop()], dim=1))
        x = self.head(x)
        if self.spec.final_activation == "sigmoid":
            # float32 sigmoid rounds to exactly 0 or 1 for large logits; keep it open
            x = torch.sigmoid(x).clamp(_SIGMOID_LO, _SIGMOID_HI)
        return x


def build_network(spec: NetworkSpec, seed: int = 0) -> UNet:
    """Instantiate ``spec`` with He-normal kernels and zero biases."""
    net = UNet(spec)
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for name, p in net.named_parameters():
            if name.endswith("bias"):
                p.zero_()
            else:
                fan_in = p.shape[1] * p.shape[2] * p.shape[3]
                p.copy_(torch.randn(p.shape, generator=gen) * (2.0 / fan_in) ** 0.5)
    return net


def parameter_count(net: nn.Module) -> int:
    return sum(p.numel() for p in net.parameters())


def forward(net: UNet, x: torch.Tensor) -> torch.Tensor:
    """Run ``net`` on an ``(N, C, H, W)`` batch after checking the input contract."""
    spec = net.spec
    if x.ndim != 4:
        raise ShapeError(f"expected an (N, C, H, W) batch, got shape {tuple(x.shape)}")
    if x.shape[1] != spec.in_channels:
        raise ShapeError(f"network expects {spec.in_channels} input channels, got {x.shape[1]}")
    h, w = x.shape[-2:]
    m = spec.multiple
    if h % m or w % m:
        raise SizeError(f"input size {h}x{w} is not divisible by {m}; pad or crop first")
    return net(x)


def _check_terms(terms: Mapping[str, torch.Tensor]) -> None:
    for name, value in terms.items():
        if not torch.isfinite(value).all():
            raise NumericError(name)


def gradients(
    net: nn.Module,
    loss_fn: Callable[[nn.Module, object], torch.Tensor | Mapping[str, torch.Tensor]],
    batch,
) -> dict[str, torch.Tensor]:
    """Return d(loss)/d(param) for every named parameter of ``net``.

    ``loss_fn(net, batch)`` may return a scalar or a mapping of named scalar
    terms; the terms are summed and a non-finite one is reported by name.
    """
    net.zero_grad(set_to_none=True)
    out = loss_fn(net, batch)
    terms = dict(out) if isinstance(out, Mapping) else {"loss": out}
    _check_terms(terms)
    total = sum(terms.values())
    total.backward()
    grads = {}
    for name, p in net.named_parameters():
        grads[name] = torch.zeros_like(p) if p.grad is None else p.grad.detach().clone()
    net.zero_grad(set_to_none=True)
    return grads


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, torch.Tensor] = field(default_factory=dict)
    v: dict[str, torch.Tensor] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, torch.Tensor],
    grads: Mapping[str, torch.Tensor],
    state: OptimizerState,
) -> tuple[Mapping[str, torch.Tensor], OptimizerState]:
    """One bias-corrected Adam update, applied in place to ``params``."""
    if set(params) != set(grads):
        raise ShapeError(f"parameter/gradient names differ: {sorted(set(params) ^ set(grads))}")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ShapeError(f"gradient for {name} has shape {tuple(g.shape)}, parameter {tuple(p.shape)}")
            m = state.m.setdefault(name, torch.zeros_like(p))
            v = state.v.setdefault(name, torch.zeros_like(p))
            m.mul_(state.beta1).add_(g, alpha=1.0 - state.beta1)
            v.mul_(state.beta2).addcmul_(g, g, value=1.0 - state.beta2)
            p.sub_((state.lr / bc1) * m / ((v / bc2).sqrt() + state.eps))
    return params, state


def gaussian_window(size: int = 11, sigma: float = 1.5, dtype=torch.float64) -> torch.Tensor:
    x = torch.arange(size, dtype=dtype) - (size - 1) / 2
    g = torch.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def ssim(
    a: torch.Tensor,
    b: torch.Tensor,
    window: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
    data_range: float = 1.0,
) -> torch.Tensor:
    """Mean single-scale SSIM of two ``(N, C, H, W)`` batches (valid windows only)."""
    if a.shape != b.shape:
        raise ShapeError(f"SSIM inputs differ in shape: {tuple(a.shape)} vs {tuple(b.shape)}")
    if min(a.shape[-2:]) < window:
        raise SizeError(f"SSIM needs both sides >= {window}, got {tuple(a.shape[-2:])}")
    c = a.shape[1]
    g = gaussian_window(window, sigma, dtype=a.dtype).to(a.device)
    kx = g.view(1, 1, 1, window).expand(c, 1, 1, window)
    ky = g.view(1, 1, window, 1).expand(c, 1, window, 1)

    def blur(t):
        return F.conv2d(F.conv2d(t, kx, groups=c), ky, groups=c)

    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a**2
    var_b = blur(b * b) - mu_b**2
    cov = blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return (num / den).mean()


# -- checkpoints -------------------------------------------------------------

MAGIC = b"BREADCKPT"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    stage: str
    spec: NetworkSpec
    params: dict[str, np.ndarray]
    step: int = 0
    version: int = FORMAT_VERSION

    @classmethod
    def from_network(cls, stage: str, net: UNet, step: int = 0) -> "Checkpoint":
        params = {k: v.detach().cpu().numpy().astype("<f4") for k, v in net.state_dict().items()}
        return cls(stage=stage, spec=net.spec, params=params, step=step)

    def to_network(self) -> UNet:
        net = UNet(self.spec)
        state = {k: torch.from_numpy(np.array(v, dtype=np.float32)) for k, v in self.params.items()}
        try:
            net.load_state_dict(state, strict=True)
        except RuntimeError as exc:
            raise FormatError(f"checkpoint parameters do not match its spec: {exc}") from exc
        net.eval()
        return net

    def to_bytes(self) -> bytes:
        meta = json.dumps(
            {"stage": self.stage, "spec": asdict(self.spec), "step": int(self.step)},
            sort_keys=True,
        ).encode("utf-8")
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<B", self.version))
        buf.write(struct.pack("<I", len(meta)))
        buf.write(meta)
        buf.write(struct.pack("<I", len(self.params)))
        for name, arr in self.params.items():
            raw = name.encode("utf-8")
            data = np.ascontiguousarray(arr, dtype="<f4")
            buf.write(struct.pack("<H", len(raw)))
            buf.write(raw)
            buf.write(struct.pack("<B", data.ndim))
            buf.write(struct.pack(f"<{data.ndim}I", *data.shape))
            buf.write(data.tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Checkpoint":
        reader = _Reader(blob)
        magic = reader.take(len(MAGIC))
        if magic != MAGIC:
            raise FormatError(f"bad magic: expected {MAGIC!r}, found {magic!r}")
        (version,) = reader.unpack("<B")
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
        (meta_len,) = reader.unpack("<I")
        try:
            meta = json.loads(reader.take(meta_len).decode("utf-8"))
            spec = NetworkSpec(**meta["spec"])
            stage, step = meta["stage"], int(meta["step"])
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"corrupt checkpoint header: {exc}") from exc
        if stage not in STAGES:
            raise FormatError(f"unknown stage tag {stage!r}")
        (count,) = reader.unpack("<I")
        params = {}
        for _ in range(count):
            (name_len,) = reader.unpack("<H")
            name = reader.take(name_len).decode("utf-8")
            (ndim,) = reader.unpack("<B")
            shape = reader.unpack(f"<{ndim}I")
            n = int(np.prod(shape, dtype=np.int64))
            params[name] = np.frombuffer(reader.take(4 * n), dtype="<f4").reshape(shape).copy()
        if reader.remaining:
            raise FormatError(f"{reader.remaining} trailing bytes after the last record")
        return cls(stage=stage, spec=spec, params=params, step=step, version=version)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    @property
    def remaining(self) -> int:
        return len(self.blob) - self.pos

    def take(self, n: int) -> bytes:
        if n > self.remaining:
            raise FormatError(f"truncated checkpoint: wanted {n} bytes at offset {self.pos}, {self.remaining} left")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    path = Path(path)
    blob = ckpt.to_bytes()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def load_checkpoint(path: str | Path) -> Checkpoint:
    return Checkpoint.from_bytes(Path(path).read_bytes())
