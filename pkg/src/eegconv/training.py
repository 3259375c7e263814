"""Mini-batch training loop with per-epoch curves and checkpoints."""
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from .exceptions import ShapeError
from .models import INPUT_KINDS, build
from .nn import Adamax, softmax_crossentropy

log = logging.getLogger(__name__)

CURVE_COLUMNS = ("epoch", "train_acc", "val_acc", "train_loss", "val_loss")

# Epoch at which each input representation is assessed.
DEFAULT_EVAL_EPOCH = {"raw": 20, "chromatic": 10, "side_by_side": 10}


@dataclass
class TrainConfig:
    model: str = "r_vgg"
    width: float = 1.0
    init: str = "fan_in"
    input_scale: float = 1.0
    batch_size: int = 70
    epochs: int = 70
    eval_epoch: Optional[int] = None
    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay: float = 0.001
    decay_mode: str = "l2"
    seed: int = 0
    split_seed: int = 0
    dtype: str = "float32"
    keep_checkpoints: str = "selected"
    selection: str = "fixed"

    def __post_init__(self):
        if not np.isfinite(self.input_scale) or self.input_scale <= 0:
            raise ValueError("input_scale must be a positive finite number")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.decay_mode not in ("l2", "lr"):
            raise ValueError("decay_mode must be 'l2' or 'lr'")
        if self.keep_checkpoints not in ("selected", "all"):
            raise ValueError("keep_checkpoints must be 'selected' or 'all'")
        if self.selection not in ("fixed", "best_val"):
            raise ValueError("selection must be 'fixed' or 'best_val'")
        if not 1 <= self.resolved_eval_epoch() <= self.epochs:
            raise ValueError("eval_epoch must lie in [1, epochs]")

    @property
    def input_kind(self):
        return INPUT_KINDS[self.model]

    def resolved_eval_epoch(self):
        if self.eval_epoch is not None:
            return int(self.eval_epoch)
        return min(DEFAULT_EVAL_EPOCH[INPUT_KINDS[self.model]], self.epochs)

    def to_dict(self):
        return asdict(self)

    def build_network(self):
        return build(self.model, width=self.width, seed=self.seed, dtype=np.dtype(self.dtype),
                     init=self.init, input_scale=self.input_scale)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class TrainResult:
    curves: List[Dict[str, float]] = field(default_factory=list)
    checkpoints: Dict[int, Dict[str, np.ndarray]] = field(default_factory=dict)
    optimizer: Optional[Adamax] = None
    selected_epoch: Optional[int] = None


def snapshot(net):
    return {k: v.copy() for k, v in net.named_parameters().items()}


def evaluate_loss_acc(net, X, y, batch_size=256):
    """Mean cross-entropy and per-sample accuracy in inference mode."""
    was = net.training
    net.eval()
    total, correct = 0.0, 0
    for i in range(0, len(X), batch_size):
        logits = net.logits(X[i:i + batch_size])
        loss, probs, _ = softmax_crossentropy(logits, y[i:i + batch_size])
        total += loss * len(logits)
        correct += int(np.sum((probs[:, 1] >= 0.5).astype(int) == y[i:i + batch_size]))
    net.training = was
    return total / len(X), correct / len(X)


def train(net, X, y, cfg: TrainConfig, X_val=None, y_val=None,
          on_epoch_end: Optional[Callable] = None) -> TrainResult:
    """Train ``net`` in place with Adamax.

    Each epoch draws a fresh permutation, trains on consecutive mini-batches
    (the last, shorter batch included) and records training-mode running
    loss/accuracy plus inference-mode validation loss/accuracy.
    ``on_epoch_end(epoch, net, optimizer, row)`` is called after every epoch.

    ``selected_epoch`` is ``cfg.eval_epoch`` under fixed selection, or the
    earliest epoch with the highest validation accuracy under ``best_val``;
    its parameters are always kept in ``checkpoints``.
    """
    X = np.asarray(X)
    y = np.asarray(y, dtype=np.int64)
    if tuple(X.shape[1:]) != net.input_shape:
        raise ShapeError(net.name, f"samples have shape {X.shape[1:]}, model expects {net.input_shape}")
    if X_val is not None and tuple(np.shape(X_val)[1:]) != net.input_shape:
        raise ShapeError(net.name, f"validation samples have shape {np.shape(X_val)[1:]}")
    if len(X) == 0:
        raise ValueError("empty training set")

    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5EED]))
    params = net.named_parameters()
    opt = Adamax(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps,
                 weight_decay=cfg.decay if cfg.decay_mode == "l2" else 0.0)
    eval_epoch = cfg.resolved_eval_epoch()
    result = TrainResult(optimizer=opt)
    if cfg.selection == "best_val" and X_val is None:
        raise ValueError("best_val selection needs validation data")
    best = (-1.0, None)
    n = len(X)
    for epoch in range(1, cfg.epochs + 1):
        if cfg.decay_mode == "lr":
            opt.lr = cfg.lr * (1 - cfg.decay) ** (epoch - 1)
        net.train()
        order = shuffle_rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, probs, grads = net.loss_and_gradients(X[idx], y[idx])
            opt.step(grads)
            loss_sum += loss * len(idx)
            correct += int(np.sum((probs[:, 1] >= 0.5).astype(int) == y[idx]))
        net.eval()
        row = {"epoch": epoch, "train_acc": correct / n, "train_loss": loss_sum / n,
               "val_acc": float("nan"), "val_loss": float("nan")}
        if X_val is not None and len(X_val):
            row["val_loss"], row["val_acc"] = evaluate_loss_acc(net, X_val, np.asarray(y_val))
        result.curves.append(row)
        if cfg.selection == "fixed":
            keep = epoch == eval_epoch
        else:
            keep = row["val_acc"] > best[0]
            if keep:
                if best[1] is not None and cfg.keep_checkpoints != "all":
                    result.checkpoints.pop(best[1], None)
                best = (row["val_acc"], epoch)
        if cfg.keep_checkpoints == "all" or keep:
            result.checkpoints[epoch] = snapshot(net)
        log.info("%s seed %d epoch %d: train %.3f val %.3f", net.name, cfg.seed, epoch,
                 row["train_acc"], row["val_acc"])
        if on_epoch_end is not None:
            on_epoch_end(epoch, net, opt, row)
    result.selected_epoch = eval_epoch if cfg.selection == "fixed" else best[1]
    return result
