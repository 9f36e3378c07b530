"""Back-end networks.

Three families:

* six low-footprint inception networks (Inc-01..Inc-06) over wavelet
  scalograms, built from single- or double-inception stages;
* a registry of eight benchmark backbones adapted to 1-channel input and
  4-class output (randomly initialized, no image pretraining);
* the MLP head trained on embedding vectors, plus the embedding-provider
  seam a pretrained extractor can be plugged into.

All networks end in a softmax, so forward passes return probability rows.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torchvision.models as tvm

from respkit.errors import ContractError
from respkit.features import (
    LOGMEL_BINS,
    LOGMEL_FRAMES,
    WAVELET_BINS,
    WAVELET_FRAMES,
    Spectrogram,
    SpectrogramKind,
)

N_CLASSES = 4

FC_INIT_STD = 0.1  # new fully connected layers: normal(0, 0.1)


@dataclass(frozen=True)
class InceptionSpec:
    """Channel / fully-connected settings for one Inc-0x network."""

    name: str
    double_layers: bool
    ch1: int
    ch2: int
    ch3: int
    ch4: int
    fc1: int
    fc2: int

    def __post_init__(self):
        for field in ("ch1", "ch2", "ch3", "ch4", "fc1", "fc2"):
            if getattr(self, field) <= 0:
                raise ContractError(f"{self.name}: {field} must be positive")


INCEPTION_SPECS = {
    s.name: s
    for s in [
        InceptionSpec("Inc-01", False, 32, 64, 128, 256, 512, 512),
        InceptionSpec("Inc-02", True, 32, 64, 128, 256, 512, 512),
        InceptionSpec("Inc-03", False, 64, 128, 256, 512, 1024, 1024),
        InceptionSpec("Inc-04", True, 64, 128, 256, 512, 1024, 1024),
        InceptionSpec("Inc-05", False, 128, 256, 512, 1024, 2048, 2048),
        InceptionSpec("Inc-06", True, 128, 256, 512, 1024, 2048, 2048),
    ]
}


def _init_weights(module: nn.Module, fc_std: float | None = None) -> None:
    """Fan-in-scaled conv init; FC layers fan-in-scaled unless fc_std given."""
    for m in module.modules():
        if isinstance(m, nn.Linear):
            std = fc_std if fc_std is not None else (2.0 / m.in_features) ** 0.5
            nn.init.normal_(m.weight, mean=0.0, std=std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.Conv2d):
            fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
            nn.init.normal_(m.weight, mean=0.0, std=(2.0 / fan_in) ** 0.5)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


class InceptionLayer(nn.Module):
    """Four parallel branches concatenated channel-wise.

    1x1 conv | 1x1 -> 3x3 | 1x1 -> 5x5 | 3x3 max-pool -> 1x1, each branch
    emitting out_ch/4 channels; spatial size is preserved.
    """

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        if out_ch % 4 != 0:
            raise ContractError(f"inception out_ch must be divisible by 4, got {out_ch}")
        q = out_ch // 4
        self.branch1 = nn.Conv2d(in_ch, q, 1)
        self.branch3 = nn.Sequential(
            nn.Conv2d(in_ch, q, 1), nn.ReLU(inplace=True), nn.Conv2d(q, q, 3, padding=1)
        )
        self.branch5 = nn.Sequential(
            nn.Conv2d(in_ch, q, 1), nn.ReLU(inplace=True), nn.Conv2d(q, q, 5, padding=2)
        )
        self.branch_pool = nn.Sequential(
            nn.MaxPool2d(3, stride=1, padding=1), nn.Conv2d(in_ch, q, 1)
        )

    def forward(self, x):
        return torch.cat(
            [self.branch1(x), self.branch3(x), self.branch5(x), self.branch_pool(x)],
            dim=1,
        )


class InceptionNet(nn.Module):
    """Inc-0x stack: 4 inception stages with BN/MP/dropout, then 3 FC layers."""

    def __init__(self, spec: InceptionSpec):
        super().__init__()
        self.spec = spec

        def stage(in_ch, out_ch):
            layers = [InceptionLayer(in_ch, out_ch), nn.ReLU(inplace=True)]
            if spec.double_layers:
                layers += [InceptionLayer(out_ch, out_ch), nn.ReLU(inplace=True)]
            return nn.Sequential(*layers)

        def transition(ch, drop):
            # BN - MP - Dr - BN; 2x2/2 pooling with ceil mode so odd dims survive
            return nn.Sequential(
                nn.BatchNorm2d(ch),
                nn.MaxPool2d(2, stride=2, ceil_mode=True),
                nn.Dropout(drop),
                nn.BatchNorm2d(ch),
            )

        self.input_bn = nn.BatchNorm2d(1)
        self.stage1 = stage(1, spec.ch1)
        self.trans1 = transition(spec.ch1, 0.10)
        self.stage2 = stage(spec.ch1, spec.ch2)
        self.trans2 = transition(spec.ch2, 0.15)
        self.stage3 = stage(spec.ch2, spec.ch3)
        self.trans3 = transition(spec.ch3, 0.20)
        self.stage4 = stage(spec.ch3, spec.ch4)
        self.head_bn = nn.BatchNorm2d(spec.ch4)
        self.head_drop = nn.Dropout(0.25)
        self.fc1 = nn.Linear(spec.ch4, spec.fc1)
        self.fc1_drop = nn.Dropout(0.30)
        self.fc2 = nn.Linear(spec.fc1, spec.fc2)
        self.fc2_drop = nn.Dropout(0.30)
        self.fc_out = nn.Linear(spec.fc2, N_CLASSES)
        _init_weights(self)

    def _gmp(self, x):
        x = self.input_bn(x)
        x = self.trans1(self.stage1(x))
        x = self.trans2(self.stage2(x))
        x = self.trans3(self.stage3(x))
        x = self.head_bn(self.stage4(x))
        return torch.amax(x, dim=(2, 3))  # global max pool -> (B, ch4)

    def _fc2(self, x):
        x = self.head_drop(self._gmp(x))
        x = self.fc1_drop(torch.relu(self.fc1(x)))
        return torch.relu(self.fc2(x))

    def forward(self, x):
        # float64 softmax: float32 underflows to exact zeros when saturated
        logits = self.fc_out(self.fc2_drop(self._fc2(x)))
        return torch.softmax(logits.double(), dim=1)

    def embed(self, x, tap_point: str):
        if tap_point == "GMP":
            return self._gmp(x)
        if tap_point == "FC2":
            return self._fc2(x)
        raise ContractError(f"unknown tap point {tap_point!r}")

    @property
    def tap_widths(self):
        return {"GMP": self.spec.ch4, "FC2": self.spec.fc2}


class MLPHead(nn.Module):
    """FC(4096)-FC(4096)-FC(1024)-FC(4) head over embedding vectors."""

    def __init__(self, input_dim: int):
        super().__init__()
        if input_dim <= 0:
            raise ContractError("input_dim must be positive")
        self.input_dim = input_dim
        self.body = nn.Sequential(
            nn.Linear(input_dim, 4096),
            nn.ReLU(inplace=True),
            nn.Dropout(0.10),
            nn.Linear(4096, 4096),
            nn.ReLU(inplace=True),
            nn.Dropout(0.10),
            nn.Linear(4096, 1024),
            nn.ReLU(inplace=True),
            nn.Dropout(0.10),
            nn.Linear(1024, N_CLASSES),
        )
        _init_weights(self, fc_std=FC_INIT_STD)

    def forward(self, x):
        return torch.softmax(self.body(x).double(), dim=1)


# -- benchmark backbones ----------------------------------------------------


def _depthwise_separable(in_ch, out_ch, stride):
    return nn.Sequential(
        nn.Conv2d(in_ch, in_ch, 3, stride=stride, padding=1, groups=in_ch, bias=False),
        nn.BatchNorm2d(in_ch),
        nn.ReLU(inplace=True),
        nn.Conv2d(in_ch, out_ch, 1, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


class MobileNetV1(nn.Module):
    def __init__(self, num_classes=N_CLASSES, in_channels=1):
        super().__init__()
        cfg = [
            (64, 1), (128, 2), (128, 1), (256, 2), (256, 1), (512, 2),
            (512, 1), (512, 1), (512, 1), (512, 1), (512, 1), (1024, 2), (1024, 1),
        ]
        layers = [
            nn.Conv2d(in_channels, 32, 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(32),
            nn.ReLU(inplace=True),
        ]
        ch = 32
        for out_ch, stride in cfg:
            layers.append(_depthwise_separable(ch, out_ch, stride))
            ch = out_ch
        self.features = nn.Sequential(*layers)
        self.classifier = nn.Linear(ch, num_classes)

    def forward(self, x):
        x = self.features(x)
        x = torch.mean(x, dim=(2, 3))
        return self.classifier(x)


class _SepConv(nn.Sequential):
    def __init__(self, in_ch, out_ch):
        super().__init__(
            nn.Conv2d(in_ch, in_ch, 3, padding=1, groups=in_ch, bias=False),
            nn.Conv2d(in_ch, out_ch, 1, bias=False),
            nn.BatchNorm2d(out_ch),
        )


class _XceptionBlock(nn.Module):
    def __init__(self, in_ch, out_ch, downsample):
        super().__init__()
        self.main = nn.Sequential(
            nn.ReLU(inplace=False),
            _SepConv(in_ch, out_ch),
            nn.ReLU(inplace=True),
            _SepConv(out_ch, out_ch),
            nn.MaxPool2d(3, stride=2, padding=1) if downsample else nn.Identity(),
        )
        if downsample or in_ch != out_ch:
            self.skip = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=2 if downsample else 1, bias=False),
                nn.BatchNorm2d(out_ch),
            )
        else:
            self.skip = nn.Identity()

    def forward(self, x):
        return self.main(x) + self.skip(x)


class Xception(nn.Module):
    """Separable-convolution network with entry/middle/exit flows."""

    def __init__(self, num_classes=N_CLASSES, in_channels=1, middle_blocks=8):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(in_channels, 32, 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(32),
            nn.ReLU(inplace=True),
            nn.Conv2d(32, 64, 3, padding=1, bias=False),
            nn.BatchNorm2d(64),
        )
        self.entry = nn.Sequential(
            _XceptionBlock(64, 128, downsample=True),
            _XceptionBlock(128, 256, downsample=True),
            _XceptionBlock(256, 728, downsample=True),
        )
        self.middle = nn.Sequential(
            *[_XceptionBlock(728, 728, downsample=False) for _ in range(middle_blocks)]
        )
        self.exit = nn.Sequential(
            _XceptionBlock(728, 1024, downsample=True),
            _SepConv(1024, 1536),
            nn.ReLU(inplace=True),
            _SepConv(1536, 2048),
            nn.ReLU(inplace=True),
        )
        self.classifier = nn.Linear(2048, num_classes)

    def forward(self, x):
        x = self.exit(self.middle(self.entry(self.stem(x))))
        x = torch.mean(x, dim=(2, 3))
        return self.classifier(x)


def _one_channel_vgg(builder):
    m = builder(num_classes=N_CLASSES)
    m.features[0] = nn.Conv2d(1, 64, 3, padding=1)
    return m


def _build_resnet50():
    m = tvm.resnet50(num_classes=N_CLASSES)
    m.conv1 = nn.Conv2d(1, 64, 7, stride=2, padding=3, bias=False)
    return m


def _build_densenet201():
    m = tvm.densenet201(num_classes=N_CLASSES)
    m.features.conv0 = nn.Conv2d(1, 64, 7, stride=2, padding=3, bias=False)
    return m


def _build_mobilenet_v2():
    m = tvm.mobilenet_v2(num_classes=N_CLASSES)
    m.features[0][0] = nn.Conv2d(1, 32, 3, stride=2, padding=1, bias=False)
    return m


def _build_inception_v3():
    m = tvm.inception_v3(num_classes=N_CLASSES, aux_logits=False, init_weights=True)
    m.Conv2d_1a_3x3.conv = nn.Conv2d(1, 32, 3, stride=2, bias=False)
    return m


BACKBONE_REGISTRY = {
    "VGG16": lambda: _one_channel_vgg(tvm.vgg16),
    "VGG19": lambda: _one_channel_vgg(tvm.vgg19),
    "MobileNetV1": MobileNetV1,
    "MobileNetV2": _build_mobilenet_v2,
    "ResNet50": _build_resnet50,
    "DenseNet201": _build_densenet201,
    "InceptionV3": _build_inception_v3,
    "Xception": Xception,
}


class _SoftmaxWrap(nn.Module):
    def __init__(self, net: nn.Module):
        super().__init__()
        self.net = net

    def forward(self, x):
        return torch.softmax(self.net(x).double(), dim=1)


# -- network handles --------------------------------------------------------

_INPUT_SHAPES = {
    SpectrogramKind.WAVELET: (WAVELET_BINS, WAVELET_FRAMES),
    SpectrogramKind.LOGMEL: (LOGMEL_BINS, LOGMEL_FRAMES),
}


class NetworkHandle:
    """A trainable model plus its input contract and embedding taps."""

    def __init__(self, module, name, builder, builder_arg, input_kind, tap_widths=None):
        self.module = module
        self.name = name
        self.builder = builder  # "inception" | "mlp" | "backbone"
        self.builder_arg = builder_arg
        self.input_kind = input_kind  # SpectrogramKind or "embedding"
        self.tap_widths = dict(tap_widths or {})

    @property
    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.module.parameters())

    def _to_tensor(self, batch) -> torch.Tensor:
        if isinstance(batch, torch.Tensor):
            x = batch.float()
        else:
            x = torch.as_tensor(np.asarray(batch, dtype=np.float32))
        if self.input_kind == "embedding":
            if x.ndim != 2:
                raise ContractError("embedding batch must be 2-D (B, dim)")
            return x
        expected = _INPUT_SHAPES[self.input_kind]
        if x.ndim == 3 and tuple(x.shape[1:]) == expected:
            return x.unsqueeze(1)
        if x.ndim == 4 and tuple(x.shape[1:]) == (1, *expected):
            return x
        raise ContractError(
            f"{self.name} expects batches of {expected} {self.input_kind.value} "
            f"spectrograms, got {tuple(x.shape)}"
        )

    def forward(self, batch) -> np.ndarray:
        """Probability rows (B, 4), evaluation mode."""
        self.module.eval()
        with torch.no_grad():
            return self.module(self._to_tensor(batch)).numpy()

    def embedding(self, batch, tap_point: str) -> np.ndarray:
        if tap_point not in self.tap_widths:
            raise ContractError(
                f"{self.name} has no tap {tap_point!r}; available: "
                f"{sorted(self.tap_widths)}"
            )
        self.module.eval()
        with torch.no_grad():
            return self.module.embed(self._to_tensor(batch), tap_point).numpy()

    def manifest(self) -> dict:
        return {
            "name": self.name,
            "builder": self.builder,
            "builder_arg": self.builder_arg,
            "input_kind": self.input_kind
            if isinstance(self.input_kind, str)
            else self.input_kind.value,
            "tap_widths": self.tap_widths,
            "parameter_count": self.parameter_count,
        }


def build_inception_net(spec: InceptionSpec | str) -> NetworkHandle:
    if isinstance(spec, str):
        if spec not in INCEPTION_SPECS:
            raise ContractError(f"unknown inception spec {spec!r}")
        spec = INCEPTION_SPECS[spec]
    net = InceptionNet(spec)
    return NetworkHandle(
        net,
        spec.name,
        "inception",
        asdict(spec),
        SpectrogramKind.WAVELET,
        tap_widths=net.tap_widths,
    )


def build_mlp_head(input_dim: int) -> NetworkHandle:
    return NetworkHandle(
        MLPHead(input_dim), f"MLP({input_dim})", "mlp", input_dim, "embedding"
    )


def build_backbone(name: str) -> NetworkHandle:
    if name not in BACKBONE_REGISTRY:
        raise ContractError(
            f"unknown backbone {name!r}; choose from {sorted(BACKBONE_REGISTRY)}"
        )
    return NetworkHandle(
        _SoftmaxWrap(BACKBONE_REGISTRY[name]()),
        name,
        "backbone",
        name,
        SpectrogramKind.WAVELET,
    )


# -- embedding providers ----------------------------------------------------


class EmbeddingProvider:
    """Maps log-Mel spectrogram batches to fixed-width vectors.

    Adapter contract: implement `dim` and `embed`, deterministic in
    evaluation mode, and register under a provider id. A real pretrained
    checkpoint adapter drops in behind the same surface.
    """

    dim: int

    def embed(self, batch) -> np.ndarray:
        raise NotImplementedError


class FixtureEmbeddingProvider(EmbeddingProvider):
    """Deterministic stand-in: fixed random projection of pooled statistics."""

    def __init__(self, dim: int = 2048, seed: int = 0):
        if dim <= 0:
            raise ContractError("dim must be positive")
        self.dim = dim
        self.seed = seed
        rng = np.random.default_rng(seed)
        n_stats = LOGMEL_BINS * 3  # per-bin mean / std / max over time
        self._projection = rng.standard_normal((n_stats, dim)) / np.sqrt(n_stats)

    def embed(self, batch) -> np.ndarray:
        arrs = [
            b.values if isinstance(b, Spectrogram) else np.asarray(b) for b in batch
        ]
        x = np.stack(arrs).astype(np.float64)
        if x.shape[1:] != (LOGMEL_BINS, LOGMEL_FRAMES):
            raise ContractError(
                f"provider expects ({LOGMEL_BINS}, {LOGMEL_FRAMES}) log-Mel "
                f"inputs, got {x.shape[1:]}"
            )
        stats = np.concatenate(
            [x.mean(axis=2), x.std(axis=2), x.max(axis=2)], axis=1
        )
        return (stats @ self._projection).astype(np.float32)


def fixture_embedding_provider(dim: int = 2048, seed: int = 0) -> EmbeddingProvider:
    return FixtureEmbeddingProvider(dim, seed)


def resolve_provider(provider_id: str) -> EmbeddingProvider:
    """Parse a provider id like 'fixture:2048:0'."""
    parts = provider_id.split(":")
    if parts[0] == "fixture":
        dim = int(parts[1]) if len(parts) > 1 else 2048
        seed = int(parts[2]) if len(parts) > 2 else 0
        return FixtureEmbeddingProvider(dim, seed)
    raise ContractError(f"unknown embedding provider {provider_id!r}")


# -- checkpoints ------------------------------------------------------------


def save_checkpoint(
    handle: NetworkHandle, path: str | Path, extra: dict | None = None
) -> None:
    """Write weights plus a JSON manifest sidecar (<path>.json)."""
    path = Path(path)
    manifest = handle.manifest()
    if extra:
        manifest["extra"] = extra
    torch.save({"manifest": manifest, "state_dict": handle.module.state_dict()}, path)
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(manifest, indent=2))


def load_manifest(path: str | Path) -> dict:
    blob = torch.load(str(path), map_location="cpu", weights_only=False)
    return blob["manifest"]


def load_checkpoint(path: str | Path) -> NetworkHandle:
    blob = torch.load(str(path), map_location="cpu", weights_only=False)
    manifest = blob["manifest"]
    builder = manifest["builder"]
    if builder == "inception":
        handle = build_inception_net(InceptionSpec(**manifest["builder_arg"]))
    elif builder == "mlp":
        handle = build_mlp_head(int(manifest["builder_arg"]))
    elif builder == "backbone":
        handle = build_backbone(manifest["builder_arg"])
    else:
        raise ContractError(f"unknown builder {builder!r} in checkpoint manifest")
    handle.module.load_state_dict(blob["state_dict"])
    return handle
