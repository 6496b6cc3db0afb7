"""Two-stream convolutional regression of the smoothness parameter.

Each image of the pair runs through its own convolutional stream; the
streams are concatenated channelwise and fused by further conv blocks,
average pooling, and a fully connected layer.  A final softplus keeps the
predicted parameter strictly positive.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import torch
import torch.nn as nn


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture knobs; defaults are the 2D 100x100 configuration.

    The 3D source configuration (4 per-stream blocks, 5^3 kernels, 2^3
    pools, 3 fusion blocks at 128^3) is expressible with the same fields
    but is not trained here.
    """

    in_size: tuple = (100, 100)
    stream_channels: tuple = (16, 32, 64)  # one entry per per-stream block
    fusion_channels: tuple = (128, 64)  # one entry per fusion block
    kernel_size: int = 5
    pool_size: int = 2
    fc_features: int = 64
    log_target: bool = False  # train on log(alpha), exponentiate at inference

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NetworkSpec":
        data = json.loads(text)
        data["in_size"] = tuple(data["in_size"])
        data["stream_channels"] = tuple(data["stream_channels"])
        data["fusion_channels"] = tuple(data["fusion_channels"])
        return cls(**data)


def _block(c_in, c_out, k, pool, activation):
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, k, padding=k // 2),
        nn.BatchNorm2d(c_out),
        activation(),
        nn.MaxPool2d(pool, ceil_mode=True),
    )


class TwoStreamRegressor(nn.Module):
    def __init__(self, spec: NetworkSpec = NetworkSpec()):
        super().__init__()
        self.spec = spec
        k, p = spec.kernel_size, spec.pool_size

        def stream():
            blocks, c = [], 1
            for c_out in spec.stream_channels:
                blocks.append(_block(c, c_out, k, p, nn.PReLU))
                c = c_out
            return nn.Sequential(*blocks)

        self.stream_a = stream()
        self.stream_b = stream()
        fusion, c = [], 2 * spec.stream_channels[-1]
        for c_out in spec.fusion_channels:
            fusion.append(_block(c, c_out, k, p, nn.ReLU))
            c = c_out
        self.fusion = nn.Sequential(*fusion)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(c, spec.fc_features)
        self.head = nn.Linear(spec.fc_features, 1)
        self.softplus = nn.Softplus()
        self.apply(_he_init)

    def forward(self, source: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
        """Predicted parameter, shape (batch,); strictly positive."""
        za = self.stream_a(source)
        zb = self.stream_b(target)
        z = self.fusion(torch.cat([za, zb], dim=1))
        z = self.pool(z).flatten(1)
        z = torch.relu(self.fc(z))
        out = self.head(z).squeeze(1)
        if self.spec.log_target:
            # the head regresses log(alpha); exp keeps positivity
            return torch.exp(out)
        return self.softplus(out)


def _he_init(module):
    if isinstance(module, (nn.Conv2d, nn.Linear)):
        nn.init.kaiming_normal_(module.weight, nonlinearity="relu")
        if module.bias is not None:
            nn.init.zeros_(module.bias)


def save_model(path, model: TwoStreamRegressor) -> None:
    torch.save({"spec": model.spec.to_json(), "state": model.state_dict()}, path)


def load_model(path) -> TwoStreamRegressor:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    model = TwoStreamRegressor(NetworkSpec.from_json(blob["spec"]))
    model.load_state_dict(blob["state"])
    model.eval()
    return model
