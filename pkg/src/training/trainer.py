"""
Trainer Module

Mini-batch training for the three regimes:

- frequentist: mean negative log-likelihood plus L2 weight decay
- dropout: the same loss with dropout masks active in the head
- bayesian: negative ELBO with one weight sample per step

SGD with momentum and a step-decayed learning rate; the KL weight of every
mini-batch is 1 / (batches per epoch) so each epoch applies the full KL once.
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.autodiff import tensor as T
from src.autodiff.optim import SGDMomentum
from src.autodiff.rng import RngStream
from src.autodiff.tensor import Tensor
from src.core.errors import ContractError, TrainingDivergedError
from src.data.models import Block
from src.model.arch import REGIMES, NetConfig, SegNet, init_params
from src.model.losses import check_labels, nll_loss
from src.model.mc_dropout import DropoutSpec, l2_penalty
from src.model.varbayes import Prior, elbo_loss, kl_tensor
from src.storage.atomic import AtomicFile
from src.storage.checkpoint import save_checkpoint

# Default logger - will be replaced by the configured logger
logger = logging.getLogger(__name__)

REGIME_DEFAULTS: Dict[str, Dict[str, float]] = {
    'frequentist': {'lr0': 0.001, 'decay_factor': 0.7},
    'dropout': {'lr0': 0.001, 'decay_factor': 0.7},
    'bayesian': {'lr0': 0.01, 'decay_factor': 0.9},
}

# Child stream keys
INIT_STREAM, SHUFFLE_STREAM, STEP_STREAM = 0, 1, 2


@dataclass
class TrainConfig:
    """Training hyperparameters; lr0 and decay_factor default per regime."""
    regime: str = "frequentist"
    epochs: int = 100
    batch_size: int = 16
    lr0: Optional[float] = None
    decay_factor: Optional[float] = None
    decay_every: int = 10
    momentum: float = 0.9
    mc_samples: int = 50
    sigma_w: float = 4.0
    sigma_b: float = 8.0
    drop_prob: float = 0.1
    weight_decay: float = 1e-4
    dropout_preset: str = "automotive"
    checkpoint_every: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ContractError(f"Unknown regime '{self.regime}'; choose from {REGIMES}")
        defaults = REGIME_DEFAULTS[self.regime]
        if self.lr0 is None:
            self.lr0 = defaults['lr0']
        if self.decay_factor is None:
            self.decay_factor = defaults['decay_factor']
        positive = {
            'epochs': self.epochs, 'batch_size': self.batch_size, 'lr0': self.lr0,
            'decay_factor': self.decay_factor, 'decay_every': self.decay_every,
            'mc_samples': self.mc_samples, 'sigma_w': self.sigma_w, 'sigma_b': self.sigma_b,
        }
        bad = {k: v for k, v in positive.items() if not v > 0}
        if bad:
            raise ContractError(f"Training settings must be positive: {bad}")
        if not 0 <= self.momentum < 1:
            raise ContractError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ContractError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if self.checkpoint_every < 0:
            raise ContractError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")

    @classmethod
    def for_regime(cls, regime: str, **overrides) -> 'TrainConfig':
        """Config with the regime defaults; None-valued overrides are ignored."""
        return cls(regime=regime, **{k: v for k, v in overrides.items() if v is not None})

    @property
    def prior(self) -> Prior:
        return Prior(self.sigma_w, self.sigma_b)

    def dropout_spec(self) -> DropoutSpec:
        return DropoutSpec.preset(self.dropout_preset, self.drop_prob, self.weight_decay)

    def net_config(self, num_classes: int, **overrides) -> NetConfig:
        return NetConfig.for_regime(self.regime, num_classes, dropout=self.dropout_spec(), **overrides)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def lr_at(cfg: TrainConfig, epoch: int) -> float:
    """lr0 * decay_factor ** floor(epoch / decay_every), epochs counted from 0."""
    if epoch < 0:
        raise ContractError(f"epoch must be >= 0, got {epoch}")
    return cfg.lr0 * cfg.decay_factor ** (epoch // cfg.decay_every)


def kl_weight_for(num_batches: int) -> float:
    return 1.0 / num_batches


@dataclass
class TrainResult:
    """Trained network plus its per-epoch history and written files."""
    net: SegNet
    history: pd.DataFrame
    steps: List[Dict[str, float]] = field(default_factory=list)
    checkpoints: List[Path] = field(default_factory=list)


def checkpoint_path(out: Path, epoch: int) -> Path:
    return out.with_name(f"{out.stem}.epoch{epoch:03d}{out.suffix}")


def log_path(out: Path) -> Path:
    return out.with_name(f"{out.stem}.trainlog")


class Trainer:
    """Runs the training loop for one regime."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.atomic = AtomicFile()

    def set_logger(self, custom_logger):
        """Set a custom logger for the trainer."""
        global logger
        logger = custom_logger
        self.atomic.set_logger(custom_logger)

    def _loss(self, net: SegNet, scores: Tensor, labels: np.ndarray, num_batches: int) -> Tensor:
        if self.cfg.regime == "bayesian":
            prior = self.cfg.prior
            layers = net.variational_layers()
            kl_total = kl_tensor(layers[0], prior)
            for layer in layers[1:]:
                kl_total = T.add(kl_total, kl_tensor(layer, prior))
            return elbo_loss(scores, labels, kl_total, kl_weight_for(num_batches), points_per_step=labels.size)
        loss = nll_loss(scores, labels)
        if self.cfg.weight_decay > 0:
            loss = T.add(loss, l2_penalty(net, self.cfg.weight_decay))
        return loss

    def _write_log(self, out: Optional[Path], steps: List[Dict[str, float]]):
        if out is None:
            return
        frame = pd.DataFrame(steps, columns=['epoch', 'step', 'loss', 'lr'])
        self.atomic.atomic_csv_update(log_path(out), frame, header=False, float_format="%.8g")

    def train(self, blocks: Sequence[Block], rng: RngStream, num_classes: int,
              out: Optional[Path] = None, net: Optional[SegNet] = None,
              net_overrides: Optional[Dict[str, Any]] = None) -> TrainResult:
        """
        Train a network on labeled blocks.

        Args:
            blocks: Training blocks (4096 labeled rows each)
            rng: Stream for initialization, shuffling and per-step noise
            num_classes: Number of classes m
            out: Final checkpoint path; intermediate checkpoints and the
                training log are written next to it
            net: Network to continue from (fresh one if None)
            net_overrides: Extra NetConfig fields for a fresh network

        Returns:
            TrainResult

        Raises:
            TrainingDivergedError: If a step loss is not finite
        """
        cfg = self.cfg
        if not blocks:
            raise ContractError("Training needs at least one block")
        if any(block.labels is None for block in blocks):
            raise ContractError("Training blocks must be labeled")
        out = Path(out) if out is not None else None

        if net is None:
            net = init_params(cfg.net_config(num_classes, **(net_overrides or {})), rng.split(INIT_STREAM))
        if net.cfg.regime != cfg.regime:
            raise ContractError(f"Network regime {net.cfg.regime} does not match training regime {cfg.regime}")

        inputs = np.stack([block.network_input() for block in blocks]).astype(net.dtype)
        labels = check_labels(np.stack([block.labels for block in blocks]), num_classes)
        n = len(blocks)
        num_batches = math.ceil(n / cfg.batch_size)
        optimizer = SGDMomentum(net.parameters(), cfg.momentum)

        logger.info(f"🚀 Training {cfg.regime} network: {n} blocks, {num_batches} steps per epoch, "
                    f"{cfg.epochs} epochs, {net.parameter_count()} parameters")

        history, steps, written = [], [], []
        for epoch in range(cfg.epochs):
            start = time.time()
            lr = lr_at(cfg, epoch)
            order = rng.split(SHUFFLE_STREAM, epoch).permutation(n)
            losses, correct = [], 0

            for step in range(num_batches):
                batch = order[step * cfg.batch_size:(step + 1) * cfg.batch_size]
                x = Tensor(inputs[batch])
                y = labels[batch]
                scores = net.forward(x, rng=rng.split(STEP_STREAM, epoch, step),
                                     sample=cfg.regime == "bayesian", training=True)
                loss = self._loss(net, scores, y, num_batches)
                value = float(loss.data)
                if not math.isfinite(value):
                    raise TrainingDivergedError(epoch + 1, step + 1, value)

                optimizer.zero_grad()
                loss.backward()
                optimizer.step(lr)

                losses.append(value)
                correct += int(np.sum(np.argmax(scores.data, axis=-1) == y))
                steps.append({'epoch': epoch + 1, 'step': step + 1, 'loss': value, 'lr': lr})
                logger.debug(f"🔍 epoch {epoch + 1} step {step + 1}/{num_batches}: loss={value:.5f}")

            record = {
                'epoch': epoch + 1,
                'loss': float(np.mean(losses)),
                'train_accuracy': correct / labels.size,
                'lr': lr,
            }
            history.append(record)
            logger.info(f"📊 Epoch {epoch + 1}/{cfg.epochs}: loss={record['loss']:.5f} "
                        f"train_acc={record['train_accuracy']:.4f} lr={lr:.6g} "
                        f"⏱ {time.time() - start:.1f}s")

            last = epoch + 1 == cfg.epochs
            if out is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0 and not last:
                written.append(save_checkpoint(checkpoint_path(out, epoch + 1), net, self._metadata(epoch + 1)))
                self._write_log(out, steps)

        if out is not None:
            written.append(save_checkpoint(out, net, self._metadata(cfg.epochs)))
            self._write_log(out, steps)

        logger.info(f"✅ Training finished after {cfg.epochs} epochs")
        return TrainResult(net, pd.DataFrame(history, columns=['epoch', 'loss', 'train_accuracy', 'lr']),
                           steps, written)

    def _metadata(self, epoch: int) -> Dict[str, Any]:
        return {'epoch': epoch, 'train_config': self.cfg.to_dict()}


def train(cfg: TrainConfig, blocks: Sequence[Block], rng: RngStream, num_classes: int,
          out: Optional[Path] = None) -> TrainResult:
    """Train a fresh network with a default Trainer."""
    return Trainer(cfg).train(blocks, rng, num_classes, out=out)
