"""
Segmentation Architecture Module

PointNet segmentation network shared by the frequentist, dropout and
Bayesian regimes. Point-wise convolutions are shared linear maps; the
global feature is a max over the point axis, concatenated to the local
per-point features before the segmentation head.

    input T-Net (6×6) -> conv(6,64) -> feature T-Net (64×64)
    -> conv(64,128) -> conv(128,1024) -> max pool (global, 1024)
    -> concat(local 64, global 1024) = 1088
    -> conv(1088,512) -> conv(512,256) -> conv(256,128) -> conv(128,m)
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np

from src.autodiff import tensor as T
from src.autodiff.rng import RngStream
from src.autodiff.tensor import Tensor
from src.core.errors import ContractError, DimensionError
from src.model.layers import BatchNormLayer, DenseLayer, SharedMLPStage, kaiming_normal, linear
from src.model.mc_dropout import DropoutSpec, apply_dropout
from src.model.varbayes import INITIAL_RELATIVE_NOISE, VariationalLayer

# Default logger - will be replaced by the configured logger
logger = logging.getLogger(__name__)

BLOCK_POINTS = 4096
INPUT_CHANNELS = 6
REGIMES = ("frequentist", "dropout", "bayesian")
ACTIVATIONS = ("relu", "leaky_relu")

TNET_CONV_WIDTHS = (64, 128, 1024)
TNET_FC_WIDTHS = (512, 256)
HEAD_WIDTHS = (512, 256, 128)


@dataclass
class NetConfig:
    """Network hyperparameters stored alongside every checkpoint."""
    num_classes: int
    regime: str = "frequentist"
    activation: str = "relu"
    slope: float = 0.01
    batch_norm: bool = True
    dropout: DropoutSpec = field(default_factory=DropoutSpec)
    relative_noise: float = INITIAL_RELATIVE_NOISE
    dtype: str = "float32"

    def __post_init__(self):
        if self.num_classes < 2:
            raise ContractError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.regime not in REGIMES:
            raise ContractError(f"Unknown regime '{self.regime}'; choose from {REGIMES}")
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"Unknown activation '{self.activation}'; choose from {ACTIVATIONS}")
        if not 0.0 <= self.slope < 1.0:
            raise ContractError(f"slope must lie in [0, 1), got {self.slope}")

    @classmethod
    def for_regime(cls, regime: str, num_classes: int, **overrides) -> 'NetConfig':
        """Regime defaults: leaky ReLU (0.01) for the Bayesian net, ReLU otherwise."""
        settings: Dict[str, Any] = {'activation': 'leaky_relu' if regime == 'bayesian' else 'relu'}
        settings.update(overrides)
        return cls(num_classes=num_classes, regime=regime, **settings)

    @property
    def effective_slope(self) -> float:
        return self.slope if self.activation == "leaky_relu" else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'num_classes': self.num_classes,
            'regime': self.regime,
            'activation': self.activation,
            'slope': self.slope,
            'batch_norm': self.batch_norm,
            'dropout': self.dropout.to_dict(),
            'relative_noise': self.relative_noise,
            'dtype': self.dtype,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'NetConfig':
        values = dict(data)
        values['dropout'] = DropoutSpec.from_dict(values['dropout'])
        return cls(**values)


@dataclass
class ForwardContext:
    """Per-call switches threaded through every layer."""
    rng: Optional[RngStream]
    sample: bool
    training: bool
    slope: float
    dropout: Optional[DropoutSpec]


def _run_stage(stage: SharedMLPStage, x: Tensor, ctx: ForwardContext) -> Tensor:
    weight, bias = stage.layer.materialize(ctx.rng, ctx.sample)
    out = linear(x, weight, bias)
    if stage.norm is not None:
        out = stage.norm(out, ctx.training)
    if stage.activate:
        out = T.leaky_relu(out, ctx.slope)
    return out


class TNet:
    """Alignment network predicting a k×k transform per cloud."""

    def __init__(self, name: str, k: int, convs: List[SharedMLPStage], fcs: List[SharedMLPStage],
                 out_stage: SharedMLPStage):
        self.name = name
        self.k = k
        self.convs = convs
        self.fcs = fcs
        self.out_stage = out_stage

    def stages(self) -> Iterator[SharedMLPStage]:
        yield from self.convs
        yield from self.fcs
        yield self.out_stage

    def forward(self, x: Tensor, ctx: ForwardContext) -> Tensor:
        if x.ndim != 3 or x.shape[-1] != self.k:
            raise DimensionError(f"{self.name}: expected B×N×{self.k} input, got {x.shape}")
        h = x
        for stage in self.convs:
            h = _run_stage(stage, h, ctx)
        h, _ = T.max_over_points(h)
        for stage in self.fcs:
            h = _run_stage(stage, h, ctx)
        h = _run_stage(self.out_stage, h, ctx)
        return T.reshape(h, (x.shape[0], self.k, self.k))


def tnet_forward(t: TNet, x: Tensor, rng: Optional[RngStream] = None, sample: bool = False,
                 training: bool = False, slope: float = 0.0) -> Tensor:
    """Run a T-Net on a B×N×k tensor, returning B×k×k transforms."""
    ctx = ForwardContext(rng=rng, sample=sample, training=training, slope=slope, dropout=None)
    return t.forward(x, ctx)


class SegNet:
    """PointNet segmentation network."""

    def __init__(self, cfg: NetConfig, input_tnet: TNet, conv1: SharedMLPStage, feature_tnet: TNet,
                 encoder: List[SharedMLPStage], head: List[SharedMLPStage], classifier: SharedMLPStage):
        self.cfg = cfg
        self.input_tnet = input_tnet
        self.conv1 = conv1
        self.feature_tnet = feature_tnet
        self.encoder = encoder
        self.head = head
        self.classifier = classifier

    @property
    def dtype(self):
        return np.dtype(self.cfg.dtype)

    @property
    def num_classes(self) -> int:
        return self.cfg.num_classes

    def stages(self) -> Iterator[SharedMLPStage]:
        yield from self.input_tnet.stages()
        yield self.conv1
        yield from self.feature_tnet.stages()
        yield from self.encoder
        yield from self.head
        yield self.classifier

    def weight_layers(self) -> List[Any]:
        return [stage.layer for stage in self.stages()]

    def batch_norms(self) -> List[BatchNormLayer]:
        return [stage.norm for stage in self.stages() if stage.norm is not None]

    def named_parameters(self) -> Dict[str, Tensor]:
        named: Dict[str, Tensor] = {}
        for layer in self.weight_layers():
            for suffix, tensor in layer.parameters().items():
                named[f"{layer.name}.{suffix}"] = tensor
        for norm in self.batch_norms():
            for suffix, tensor in norm.parameters().items():
                named[f"{norm.name}.{suffix}"] = tensor
        return named

    def named_buffers(self) -> Dict[str, np.ndarray]:
        return {f"{norm.name}.{suffix}": array
                for norm in self.batch_norms() for suffix, array in norm.buffers().items()}

    def parameters(self) -> List[Tensor]:
        return list(self.named_parameters().values())

    def parameter_count(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def variational_layers(self) -> List[VariationalLayer]:
        return [layer for layer in self.weight_layers() if isinstance(layer, VariationalLayer)]

    def _stochastic(self, rng: Optional[RngStream], sample: bool, training: bool,
                    dropout: Optional[DropoutSpec]) -> Tuple[bool, Optional[DropoutSpec]]:
        sample_weights = sample and self.cfg.regime == "bayesian"
        spec = None
        if self.cfg.regime == "dropout" and (sample or training):
            spec = dropout if dropout is not None else self.cfg.dropout
            if not spec.active:
                spec = None
        if (sample_weights or spec is not None) and rng is None:
            raise ContractError("A stochastic forward pass needs an RngStream")
        return sample_weights, spec

    def forward_with_global(self, x: Tensor, rng: Optional[RngStream] = None, sample: bool = False,
                            training: bool = False, dropout: Optional[DropoutSpec] = None
                            ) -> Tuple[Tensor, Tensor]:
        """
        Forward pass on B×N×6 input for any N >= 1.

        Returns:
            Tuple of (B×N×m scores, B×1024 global feature)
        """
        if x.ndim != 3 or x.shape[-1] != INPUT_CHANNELS:
            raise DimensionError(f"Expected B×N×{INPUT_CHANNELS} input, got {x.shape}")
        sample_weights, spec = self._stochastic(rng, sample, training, dropout)
        ctx = ForwardContext(rng=rng, sample=sample_weights, training=training,
                             slope=self.cfg.effective_slope, dropout=spec)

        aligned = T.matmul(x, self.input_tnet.forward(x, ctx))
        h = _run_stage(self.conv1, aligned, ctx)
        local = T.matmul(h, self.feature_tnet.forward(h, ctx))
        h = local
        for stage in self.encoder:
            h = _run_stage(stage, h, ctx)
        global_feature, _ = T.max_over_points(h)

        batch, points = x.shape[0], x.shape[1]
        expanded = T.broadcast_to(T.reshape(global_feature, (batch, 1, global_feature.shape[-1])),
                                  (batch, points, global_feature.shape[-1]))
        h = T.concat([local, expanded], axis=-1)
        for placement, stage in zip(("head.0", "head.1", "head.2"), self.head):
            if spec is not None and placement in spec.placements:
                h = apply_dropout(h, spec, rng)
            h = _run_stage(stage, h, ctx)
        return _run_stage(self.classifier, h, ctx), global_feature

    def forward(self, x: Tensor, rng: Optional[RngStream] = None, sample: bool = False,
                training: bool = False, dropout: Optional[DropoutSpec] = None) -> Tensor:
        scores, _ = self.forward_with_global(x, rng, sample, training, dropout)
        return scores


def seg_forward(net: SegNet, x: Tensor, rng: Optional[RngStream] = None, sample: bool = False,
                training: bool = False) -> Tensor:
    """
    Forward one batch of blocks.

    Args:
        net: Network
        x: B×4096×6 tensor (centered xyz, rgb in [0, 1])
        rng: Random stream, required when `sample` or `training` is stochastic
        sample: Activate weight sampling (Bayesian) or MC dropout masks (dropout)
        training: Use batch statistics in batch norm and training-time dropout

    Returns:
        B×4096×m per-point class scores
    """
    if x.ndim != 3 or x.shape[1] != BLOCK_POINTS or x.shape[2] != INPUT_CHANNELS:
        raise DimensionError(f"seg_forward expects B×{BLOCK_POINTS}×{INPUT_CHANNELS} input, got {x.shape}")
    return net.forward(x, rng=rng, sample=sample, training=training)


# Construction

def _weight_layer(cfg: NetConfig, name: str, weight: np.ndarray, bias: np.ndarray):
    if cfg.regime == "bayesian":
        return VariationalLayer.from_means(name, weight, bias, cfg.relative_noise)
    return DenseLayer(name, Tensor(weight, requires_grad=True), Tensor(bias, requires_grad=True))


class _LayerFactory:
    """Creates stages in a fixed order, each with its own child stream."""

    def __init__(self, cfg: NetConfig, rng: RngStream):
        self.cfg = cfg
        self.rng = rng
        self.dtype = np.dtype(cfg.dtype)
        self.index = 0

    def stage(self, name: str, fan_in: int, fan_out: int, norm: bool = True, activate: bool = True
              ) -> SharedMLPStage:
        weight = kaiming_normal((fan_in, fan_out), self.cfg.effective_slope, self.rng.split(self.index), self.dtype)
        self.index += 1
        bias = np.zeros(fan_out, dtype=self.dtype)
        bn = BatchNormLayer.create(f"{name}.bn", fan_out, self.dtype) if (norm and self.cfg.batch_norm) else None
        return SharedMLPStage(_weight_layer(self.cfg, name, weight, bias), bn, activate)

    def identity_stage(self, name: str, fan_in: int, k: int) -> SharedMLPStage:
        """
        Output stage of a T-Net: zero weights, identity bias.

        In the Bayesian regime the noise scales with the mean, so entries with
        mu = 0 stay deterministic and each one adds a constant
        log(sigma_p / 1e-8) term to the KL through the sigma floor.
        """
        weight = np.zeros((fan_in, k * k), dtype=self.dtype)
        bias = np.eye(k, dtype=self.dtype).reshape(-1)
        self.index += 1
        return SharedMLPStage(_weight_layer(self.cfg, name, weight, bias), None, activate=False)


def _build_tnet(factory: _LayerFactory, name: str, k: int) -> TNet:
    convs, widths = [], (k,) + TNET_CONV_WIDTHS
    for i in range(len(TNET_CONV_WIDTHS)):
        convs.append(factory.stage(f"{name}.conv.{i}", widths[i], widths[i + 1]))
    fcs, widths = [], (TNET_CONV_WIDTHS[-1],) + TNET_FC_WIDTHS
    for i in range(len(TNET_FC_WIDTHS)):
        fcs.append(factory.stage(f"{name}.fc.{i}", widths[i], widths[i + 1], norm=False))
    out_stage = factory.identity_stage(f"{name}.out", TNET_FC_WIDTHS[-1], k)
    return TNet(name, k, convs, fcs, out_stage)


def init_params(cfg: NetConfig, rng: RngStream) -> SegNet:
    """
    Build a freshly initialized network.

    Weights are Kaiming normal with the gain of the configured slope, biases
    are zero and both T-Nets start out producing the identity transform.
    """
    factory = _LayerFactory(cfg, rng)
    input_tnet = _build_tnet(factory, "input_tnet", INPUT_CHANNELS)
    conv1 = factory.stage("conv.0", INPUT_CHANNELS, 64)
    feature_tnet = _build_tnet(factory, "feature_tnet", 64)
    encoder = [factory.stage("conv.1", 64, 128), factory.stage("conv.2", 128, 1024)]
    head, widths = [], (64 + 1024,) + HEAD_WIDTHS
    for i in range(len(HEAD_WIDTHS)):
        head.append(factory.stage(f"head.{i}", widths[i], widths[i + 1]))
    classifier = factory.stage("classifier", HEAD_WIDTHS[-1], cfg.num_classes, norm=False, activate=False)
    net = SegNet(cfg, input_tnet, conv1, feature_tnet, encoder, head, classifier)
    logger.debug(f"🔍 Initialized {cfg.regime} network with {net.parameter_count()} parameters")
    return net
