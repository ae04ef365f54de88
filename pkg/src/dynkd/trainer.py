"""Teacher pre-training and the distillation loop with an entropy controller.

The default recipe is a 30-epoch scale-down of the usual CIFAR-100 KD setup:
SGD lr 0.05, momentum 0.9, weight decay 5e-4, batch 64, lr x0.1 at epochs
18, 24 and 27.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import losses
from .controller import EntropyController, Mode, controller_new, reparameterize, static_alpha
from .data import Dataset
from .errors import NumericalError, ReparamError
from .landscape import CurveAccumulator, GapCurve, scan_alpha
from .metrics import MetricsRow, RunMetrics
from .nn import NetworkParams, OptimizerState, backward, forward, init_params, predict_logits, sgd_step

log = logging.getLogger(__name__)

REPARAM_TOL = 1e-9


@dataclass
class DistillConfig:
    temperature: float = 4.0
    beta: float = 1.0
    mode: Mode = Mode.SHARED
    epochs: int = 30
    batch_size: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_drop_epochs: tuple[int, ...] = (18, 24, 27)
    lr_drop_factor: float = 0.1
    seed: int = 0
    alpha_init: float = 1.0
    alpha_min: float = 1e-3
    alpha_max: float = 1e2
    landscape_scan_epochs: tuple[int, ...] = ()
    # "batches": average the curves of the epoch's training batches as they are trained on;
    # "snapshot": rescan the first scan_samples training samples after the epoch
    scan_source: str = "batches"
    scan_samples: int = 2048

    def __post_init__(self):
        self.mode = Mode.parse(self.mode)
        self.lr_drop_epochs = tuple(int(e) for e in self.lr_drop_epochs)
        self.landscape_scan_epochs = tuple(int(e) for e in self.landscape_scan_epochs)
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be nonnegative")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.scan_source not in ("batches", "snapshot"):
            raise ValueError(f"scan_source must be 'batches' or 'snapshot', got {self.scan_source!r}")
        drops = self.lr_drop_epochs
        if any(e < 0 for e in drops) or any(b <= a for a, b in zip(drops, drops[1:])):
            raise ValueError(f"lr_drop_epochs must be nonnegative and strictly increasing, got {drops}")

    def lr_schedule(self) -> list[float]:
        """Learning rate for each epoch; drop epochs at or beyond ``epochs`` never fire."""
        out, lr = [], self.lr
        drops = set(self.lr_drop_epochs)
        for e in range(self.epochs):
            if e in drops:
                lr = lr * self.lr_drop_factor
            out.append(lr)
        return out

    def streams(self) -> tuple[np.random.Generator, np.random.Generator]:
        """Independent (weight-init, data-shuffle) generators derived from the seed."""
        init_ss, shuffle_ss = np.random.SeedSequence(self.seed).spawn(2)
        return np.random.default_rng(init_ss), np.random.default_rng(shuffle_ss)

    def new_controller(self) -> EntropyController:
        return controller_new(self.mode, self.alpha_init, (self.alpha_min, self.alpha_max), self.temperature)


def evaluate(params: NetworkParams, dataset: Dataset, alpha: float = 1.0) -> float:
    """Top-1 accuracy; ties resolve to the lowest class index."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if params.layer_dims[-1] < dataset.class_count:
        raise ValueError("network has fewer outputs than the dataset has classes")
    logits = alpha * predict_logits(params, dataset.features)
    return float((np.argmax(logits, axis=1) == dataset.labels).mean())


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _check_data(params: NetworkParams, dataset: Dataset, what: str):
    if dataset.dim != params.layer_dims[0]:
        raise ValueError(f"{what} input width {params.layer_dims[0]} != dataset dim {dataset.dim}")
    if params.layer_dims[-1] != dataset.class_count:
        raise ValueError(f"{what} output width {params.layer_dims[-1]} != class count {dataset.class_count}")


def train_teacher(
    config: DistillConfig,
    layer_dims,
    train: Dataset,
    test: Dataset | None = None,
) -> tuple[NetworkParams, RunMetrics]:
    """Supervised cross-entropy training with the config's optimizer and schedule."""
    init_rng, shuffle_rng = config.streams()
    params = init_params(layer_dims, init_rng)
    _check_data(params, train, "teacher")
    opt = OptimizerState(config.lr, config.momentum, config.weight_decay)
    metrics = RunMetrics()
    for epoch, lr in enumerate(config.lr_schedule()):
        opt.learning_rate = lr
        total = 0.0
        for idx in _batches(len(train), config.batch_size, shuffle_rng):
            z, cache = forward(params, train.features[idx])
            loss, dz = losses.ce_objective(z, train.labels[idx])
            if not np.isfinite(loss):
                raise NumericalError(f"teacher loss became non-finite at epoch {epoch}")
            grads, _ = backward(params, cache, dz)
            sgd_step(params, grads, opt)
            total += loss * len(idx)
        mean = total / len(train)
        metrics.rows.append(MetricsRow(
            epoch=epoch, lr=lr, loss_total=mean, loss_ce=mean,
            train_acc=evaluate(params, train),
            test_acc=None if test is None else evaluate(params, test),
        ))
        log.info("teacher epoch %d lr %.4g loss %.5f", epoch, lr, mean)
    return params, metrics


@dataclass
class DistillResult:
    student: NetworkParams  # raw student, controller not folded in
    controller: EntropyController
    metrics: RunMetrics
    reparam: NetworkParams | None = None
    reparam_error: str | None = None
    curves: dict[int, GapCurve] = field(default_factory=dict)


BatchCallback = Callable[[int, int, losses.PathParams, losses.LossBreakdown], None]


def _alpha_columns(c: EntropyController) -> dict:
    m = c.mode
    if m is Mode.FULL:
        return {"alpha_kl": c.alpha_kl, "alpha_ce": c.alpha_ce}
    if m is Mode.LEARN_T:
        return {"t_learn": c.t_learn}
    if m is Mode.NONE:
        return {"alpha": 1.0}
    return {"alpha": c.alpha}


def distill(
    config: DistillConfig,
    teacher: NetworkParams,
    student_dims,
    train: Dataset,
    test: Dataset | None = None,
    init: NetworkParams | None = None,
    callback: BatchCallback | None = None,
) -> DistillResult:
    """Train a student against a frozen teacher, then fold the controller into it.

    Each batch minimizes ``beta * KL + CE`` with the controller scales for
    the current mode; student weights take a momentum-SGD step and the
    controller a plain gradient step at the same learning rate. ``init``
    overrides the seeded student initialization. ``callback`` sees
    ``(epoch, batch, path_params, breakdown)`` after every batch.
    """
    init_rng, shuffle_rng = config.streams()
    student = init.copy() if init is not None else init_params(student_dims, init_rng)
    if list(student_dims) != student.layer_dims:
        raise ValueError(f"init dims {student.layer_dims} != student_dims {list(student_dims)}")
    _check_data(teacher, train, "teacher")
    _check_data(student, train, "student")

    teacher = teacher.copy()  # never updated; a private copy guards against aliasing
    controller = config.new_controller()
    opt = OptimizerState(config.lr, config.momentum, config.weight_decay)
    metrics = RunMetrics()
    curves: dict[int, GapCurve] = {}
    scan_epochs = set(config.landscape_scan_epochs)
    snapshot = config.scan_source == "snapshot"
    scan_set = train.subset(slice(0, config.scan_samples))
    t_scan = predict_logits(teacher, scan_set.features) if scan_epochs and snapshot else None

    for epoch, lr in enumerate(config.lr_schedule()):
        frac = epoch / config.epochs
        if controller.mode is Mode.STATIC:
            controller.alpha = static_alpha(frac)
        opt.learning_rate = lr
        sums = np.zeros(3)
        acc = CurveAccumulator(config.temperature) if epoch in scan_epochs and not snapshot else None
        for b, idx in enumerate(_batches(len(train), config.batch_size, shuffle_rng)):
            x = train.features[idx]
            z_t = predict_logits(teacher, x)
            z_s, cache = forward(student, x)
            br, dz, dctl, path = losses.distill_objective(
                z_s, z_t, train.labels[idx], config.temperature, config.beta, controller, frac
            )
            if not np.isfinite(br.total):
                raise NumericalError(f"distillation loss became non-finite at epoch {epoch}, batch {b}")
            if acc is not None:
                acc.add(z_s, z_t, train.labels[idx])
            grads, _ = backward(student, cache, dz)
            sgd_step(student, grads, opt)
            controller.step(dctl, lr)
            sums += len(idx) * np.array([br.total, br.loss_kl, br.loss_ce])
            if callback is not None:
                callback(epoch, b, path, br)

        mean = sums / len(train)
        metrics.rows.append(MetricsRow(
            epoch=epoch, lr=lr, loss_total=mean[0], loss_kl=mean[1], loss_ce=mean[2],
            train_acc=evaluate(student, train),
            test_acc=None if test is None else evaluate(student, test),
            **_alpha_columns(controller),
        ))
        if acc is not None:
            curves[epoch] = acc.curve()
        elif epoch in scan_epochs:
            z_s = predict_logits(student, scan_set.features)
            curves[epoch] = scan_alpha(z_s, t_scan, scan_set.labels, config.temperature)
        log.info("distill epoch %d lr %.4g loss %.5f %s", epoch, lr, mean[0], controller.values())

    result = DistillResult(student, controller, metrics, curves=curves)
    if controller.mode is not Mode.NONE:
        try:
            result.reparam = reparameterize(student, controller)
        except ReparamError as exc:
            result.reparam_error = str(exc)
        else:
            check = (test if test is not None else train).features[:256]
            alpha = controller.single_alpha()
            dev = np.max(np.abs(predict_logits(result.reparam, check) - alpha * predict_logits(student, check)))
            if not dev <= REPARAM_TOL:
                raise NumericalError(f"reparameterized student deviates by {dev:.3g} from the scaled student")
    return result
