"""Unsupervised training of registration models."""

import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch

from ..config.settings import Settings, TrainConfig
from ..logging.setup import get_logger
from .autodiff import backward
from .data import RegistrationPair, stack_images
from .losses import loss_smooth, similarity
from .metrics import LabelMask, dice, warp_labels
from .model import RegistrationModel, RegistrationOutput, build
from .state import CheckpointManager, EpochRecord


class TrainingError(RuntimeError):
    """Training cannot continue (empty data, non-finite loss)."""


def build_optimizer(model: RegistrationModel, config: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(
        model.parameters(),
        lr=config.lr,
        betas=(config.beta1, config.beta2),
        eps=config.eps_adam,
    )


def adam_step(
    optimizer: torch.optim.Optimizer,
    params: Mapping[str, torch.Tensor],
    grads: Mapping[str, torch.Tensor],
) -> int:
    """Install ``grads`` on ``params``, take one Adam step, return the step count."""
    for name, param in params.items():
        param.grad = grads[name].detach().clone()
    optimizer.step()
    optimizer.zero_grad(set_to_none=True)
    steps = [state.get("step", 0) for state in optimizer.state.values()]
    return int(max(steps)) if steps else 0


def model_loss(
    config: TrainConfig, output: RegistrationOutput, fixed: torch.Tensor
) -> torch.Tensor:
    """Warped-image similarity plus ``lambda`` times smoothness of ``phi`` or ``v``."""
    smooth = loss_smooth(output.regularized)
    return similarity(config, output.warped, fixed) + config.lambda_ * smooth


def validation_dice(
    model: RegistrationModel, pairs: Sequence[RegistrationPair]
) -> float | None:
    """Mean Dice of warped moving masks against fixed masks."""
    scores = []
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        for pair in pairs:
            if not pair.has_masks:
                continue
            moving, fixed = stack_images([pair], dtype)
            output = model(moving, fixed)
            assert pair.moving_mask is not None and pair.fixed_mask is not None
            warped = warp_labels(LabelMask(pair.moving_mask), output.displacement[0])
            scores.append(dice(warped, LabelMask(pair.fixed_mask)).mean)
    return float(np.mean(scores)) if scores else None


class Trainer:
    """Runs the training loop and writes checkpoints plus the loss curve."""

    def __init__(
        self,
        settings: Settings,
        out_dir: str | Path,
        model: RegistrationModel | None = None,
    ):
        self.settings = settings
        self.config = settings.training
        self.logger = get_logger(__name__)
        dtype = getattr(torch, self.config.dtype)
        if model is None:
            model = build(settings.model, dtype, self.config.seed)
        self.model = model
        self.dtype = next(self.model.parameters()).dtype
        self.checkpoints = CheckpointManager(out_dir)
        self.optimizer = build_optimizer(self.model, self.config)
        self.generator = torch.Generator().manual_seed(self.config.seed)
        self.history: list[EpochRecord] = []

    def run(
        self,
        train_pairs: Sequence[RegistrationPair],
        val_pairs: Sequence[RegistrationPair] = (),
    ) -> list[EpochRecord]:
        """Train for ``config.epochs`` epochs."""
        if not train_pairs:
            raise TrainingError("training set is empty")

        self.logger.info(
            f"Training {self.model.variant.label} on {len(train_pairs)} pairs "
            f"for {self.config.epochs} epochs"
        )
        for epoch in range(1, self.config.epochs + 1):
            mean_loss = self._train_epoch(epoch, train_pairs)
            val = validation_dice(self.model, val_pairs) if val_pairs else None
            self.history.append(EpochRecord(epoch=epoch, loss=mean_loss, val_dice=val))
            self.checkpoints.write_curve(self.history)
            self.logger.info(
                f"Epoch {epoch}: loss {mean_loss:.6f}"
                + ("" if val is None else f", val dice {val:.4f}")
            )
            if epoch % self.config.checkpoint_every == 0 or epoch == self.config.epochs:
                self.checkpoints.save(self.model, epoch, mean_loss)
        return self.history

    def _train_epoch(self, epoch: int, pairs: Sequence[RegistrationPair]) -> float:
        """One pass over ``pairs`` in a seeded shuffled order."""
        self.model.train()
        params = self.model.params()
        order = torch.randperm(len(pairs), generator=self.generator).tolist()
        total = 0.0
        for start in range(0, len(order), self.config.batch):
            batch = [pairs[i] for i in order[start : start + self.config.batch]]
            moving, fixed = stack_images(batch, self.dtype)
            loss = model_loss(self.config, self.model(moving, fixed), fixed)
            value = float(loss.detach())
            if not math.isfinite(value):
                latest = self.checkpoints.latest()
                self.logger.error(
                    f"Non-finite loss at epoch {epoch}, "
                    f"step {start // self.config.batch}; "
                    f"last checkpoint: {latest}"
                )
                raise TrainingError(
                    f"non-finite loss {value} at epoch {epoch}; "
                    f"last good checkpoint: {latest}"
                )
            adam_step(self.optimizer, params, backward(loss, params))
            total += value * len(batch)
        return total / len(pairs)


def train_loop(
    settings: Settings,
    train_pairs: Sequence[RegistrationPair],
    out_dir: str | Path,
    val_pairs: Sequence[RegistrationPair] = (),
    model: RegistrationModel | None = None,
) -> list[EpochRecord]:
    """Train ``settings.model`` and return the per-epoch loss curve."""
    return Trainer(settings, out_dir, model).run(train_pairs, val_pairs)
