"""Learnable entropy controller: a positive scale on the student's logits.

The controller multiplies logits by ``alpha`` before the softmax. Depending
on the mode the scale is shared by both loss paths, restricted to one path,
split into two independent scales, moved to the teacher, replaced by a
learnable temperature, or driven by a fixed three-phase schedule.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import NumericalError, ReparamError
from .nn import NetworkParams

DEFAULT_BOUNDS = (1e-3, 1e2)


class Mode(str, enum.Enum):
    NONE = "none"
    SHARED = "shared"
    KL_ONLY = "kl_only"
    CE_ONLY = "ce_only"
    FULL = "full"
    TEACHER = "teacher"
    LEARN_T = "learn_t"
    COMPENSATED = "compensated"
    STATIC = "static"

    @classmethod
    def parse(cls, name: "str | Mode") -> "Mode":
        if isinstance(name, Mode):
            return name
        key = str(name).strip().lower().replace("-", "_")
        aliases = {"kd": "none", "dynamickd": "shared", "kl": "kl_only", "ce": "ce_only", "t": "learn_t"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown controller mode {name!r}") from None


# stable on-disk tags; never renumber
MODE_TAGS = {
    Mode.NONE: 0,
    Mode.SHARED: 1,
    Mode.KL_ONLY: 2,
    Mode.CE_ONLY: 3,
    Mode.FULL: 4,
    Mode.TEACHER: 5,
    Mode.LEARN_T: 6,
    Mode.COMPENSATED: 7,
    Mode.STATIC: 8,
}
TAG_MODES = {v: k for k, v in MODE_TAGS.items()}

LEARNABLE = {
    Mode.NONE: (),
    Mode.STATIC: (),
    Mode.SHARED: ("alpha",),
    Mode.KL_ONLY: ("alpha",),
    Mode.CE_ONLY: ("alpha",),
    Mode.TEACHER: ("alpha",),
    Mode.COMPENSATED: ("alpha",),
    Mode.FULL: ("alpha_kl", "alpha_ce"),
    Mode.LEARN_T: ("t_learn",),
}

# modes whose trained scale lives on the student's final layer
_STUDENT_SIDE = {Mode.SHARED, Mode.KL_ONLY, Mode.CE_ONLY, Mode.STATIC, Mode.COMPENSATED, Mode.FULL}


class PathParams(NamedTuple):
    """Scales each loss path sees for one batch."""

    alpha_kl: float
    alpha_ce: float
    alpha_teacher: float
    temperature: float | None  # overrides the run temperature on the KL path


def static_alpha(epoch_fraction: float) -> float:
    """Three-phase schedule: 0.5 for the first 1/24 of training, 1.0 until half way, then 2.0."""
    if epoch_fraction < 1.0 / 24.0:
        return 0.5
    if epoch_fraction < 0.5:
        return 1.0
    return 2.0


@dataclass
class EntropyController:
    mode: Mode = Mode.SHARED
    alpha: float = 1.0
    alpha_kl: float = 1.0
    alpha_ce: float = 1.0
    t_learn: float = 4.0
    alpha_min: float = DEFAULT_BOUNDS[0]
    alpha_max: float = DEFAULT_BOUNDS[1]
    grads: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.mode = Mode.parse(self.mode)
        if not 0.0 < self.alpha_min <= self.alpha_max < math.inf:
            raise ValueError(f"invalid bounds [{self.alpha_min}, {self.alpha_max}]")

    @property
    def learnable(self) -> tuple[str, ...]:
        return LEARNABLE[self.mode]

    def values(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in self.learnable}

    def zero_grad(self) -> None:
        self.grads = {name: 0.0 for name in self.learnable}

    def path_params(self, epoch_fraction: float = 0.0) -> PathParams:
        m = self.mode
        if m in (Mode.SHARED, Mode.COMPENSATED):
            return PathParams(self.alpha, self.alpha, 1.0, None)
        if m is Mode.KL_ONLY:
            return PathParams(self.alpha, 1.0, 1.0, None)
        if m is Mode.CE_ONLY:
            return PathParams(1.0, self.alpha, 1.0, None)
        if m is Mode.FULL:
            return PathParams(self.alpha_kl, self.alpha_ce, 1.0, None)
        if m is Mode.TEACHER:
            return PathParams(1.0, 1.0, self.alpha, None)
        if m is Mode.LEARN_T:
            return PathParams(1.0, 1.0, 1.0, self.t_learn)
        if m is Mode.STATIC:
            a = static_alpha(epoch_fraction)
            return PathParams(a, a, 1.0, None)
        return PathParams(1.0, 1.0, 1.0, None)

    def step(self, grads: dict[str, float] | None, lr: float) -> None:
        """Plain gradient descent on the learnable fields, then clamp to bounds.

        No momentum and no weight decay. ``grads`` defaults to the stored slots.
        """
        grads = self.grads if grads is None else grads
        for name in self.learnable:
            g = float(grads.get(name, 0.0))
            if not math.isfinite(g):
                raise NumericalError(f"non-finite controller gradient for {name}")
            value = getattr(self, name) - lr * g
            setattr(self, name, min(max(value, self.alpha_min), self.alpha_max))
        self.grads = dict(grads)

    def single_alpha(self) -> float:
        """The one student-side scale that reparameterization folds into the final layer."""
        m = self.mode
        if m is Mode.NONE:
            return 1.0
        if m is Mode.FULL:
            if self.alpha_kl != self.alpha_ce:
                raise ReparamError(
                    f"FULL mode holds two independent scales (alpha_kl={self.alpha_kl:.6g}, "
                    f"alpha_ce={self.alpha_ce:.6g}); no single final-layer rescaling reproduces both"
                )
            return self.alpha_kl
        if m not in _STUDENT_SIDE:
            raise ReparamError(f"mode {m.value!r} has no student-side scale to fold into the network")
        return self.alpha

    def admits_reparam(self) -> bool:
        try:
            self.single_alpha()
        except ReparamError:
            return False
        return self.mode is not Mode.NONE


def controller_new(
    mode: Mode | str = Mode.SHARED,
    alpha_init: float = 1.0,
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
    temperature: float = 4.0,
) -> EntropyController:
    """Fresh controller with every scale at ``alpha_init`` and zeroed gradients.

    ``temperature`` seeds the learnable temperature in LEARN_T mode.
    """
    lo, hi = bounds
    if alpha_init <= 0:
        raise ValueError(f"alpha_init must be positive, got {alpha_init}")
    if not 0 < lo <= alpha_init <= hi:
        raise ValueError(f"alpha_init={alpha_init} outside bounds [{lo}, {hi}]")
    mode = Mode.parse(mode)
    if mode is Mode.LEARN_T and not lo <= temperature <= hi:
        raise ValueError(f"temperature={temperature} outside bounds [{lo}, {hi}]")
    c = EntropyController(mode, alpha_init, alpha_init, alpha_init, temperature, lo, hi)
    c.zero_grad()
    return c


def reparameterize_alpha(params: NetworkParams, alpha: float) -> NetworkParams:
    """Scale the final affine layer (weights and bias) by ``alpha``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    out = params.copy()
    out.weights[-1] = out.weights[-1] * alpha
    out.biases[-1] = out.biases[-1] * alpha
    return out


def reparameterize(params: NetworkParams, controller: EntropyController) -> NetworkParams:
    """Fold the controller's trained scale into the last layer so it can be removed."""
    return reparameterize_alpha(params, controller.single_alpha())
