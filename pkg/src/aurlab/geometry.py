"""Uncertainty sets over flattened ``n x k`` perturbation matrices.

Four sets are supported, all centred at the origin of ``R^(n*k)``:

========== =========================================
kind       constraint on the flattened perturbation
========== =========================================
ellipsoidal  ``||x||_2 <= rho``
box          ``||x||_inf <= rho``
diamond      ``||x||_1 <= rho``
budget       ``||x||_1 <= rho`` and ``||x||_inf <= gamma``
========== =========================================

The module provides membership tests, exact hypervolumes, the per-entry
second moment of the uniform distribution on each set, and the ridge penalty
that averaging the squared loss over the set produces.  Penalties come in two
flavours (:class:`PenaltyMode`): the published constants, and constants
derived by direct integration.  They differ for the ellipsoidal set and for
the budget set; ``aurlab.audit`` settles which one matches brute force.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError, DimensionError, FormulaInvalidError

MEMBERSHIP_RTOL = 1e-12


class SetKind(str, enum.Enum):
    ELLIPSOIDAL = "ellipsoidal"
    BOX = "box"
    DIAMOND = "diamond"
    BUDGET = "budget"

    @property
    def code(self) -> int:
        """Integer tag understood by the sampling kernels."""
        return _KIND_CODES[self]


_KIND_CODES = {
    SetKind.ELLIPSOIDAL: 0,
    SetKind.BOX: 1,
    SetKind.DIAMOND: 2,
    SetKind.BUDGET: 3,
}


class PenaltyMode(str, enum.Enum):
    PAPER = "paper"
    DERIVED = "derived"


@dataclass(frozen=True)
class UncertaintySet:
    """Descriptor of one perturbation set.

    Parameters
    ----------
    kind : SetKind or str
    rho : float
        Radius of the defining norm ball.
    n, k : int
        Shape of the perturbation matrix (rows, columns).
    gamma : float, optional
        Entrywise cap; required for, and only meaningful for, the budget set.
    """

    kind: SetKind
    rho: float
    n: int
    k: int
    gamma: float | None = None
    d: int = field(init=False)

    def __post_init__(self):
        try:
            kind = SetKind(self.kind.lower() if isinstance(self.kind, str) else self.kind)
        except (ValueError, AttributeError):
            raise ConfigError(f"unknown set kind {self.kind!r}") from None
        object.__setattr__(self, "kind", kind)
        rho = float(self.rho)
        if not (math.isfinite(rho) and rho > 0):
            raise ConfigError(f"rho must be a positive finite number, got {self.rho!r}")
        object.__setattr__(self, "rho", rho)
        for name in ("n", "k"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if kind is SetKind.BUDGET:
            if self.gamma is None:
                raise ConfigError("budget set requires gamma")
            gamma = float(self.gamma)
            if not (math.isfinite(gamma) and 0 < gamma <= rho):
                raise ConfigError(f"budget set needs 0 < gamma <= rho, got gamma={self.gamma!r}, rho={rho!r}")
            object.__setattr__(self, "gamma", gamma)
        elif self.gamma is not None:
            raise ConfigError(f"gamma is only valid for the budget set, not {kind.value}")
        object.__setattr__(self, "d", self.n * self.k)

    @property
    def closed_form_valid(self) -> bool:
        """False only for budget sets whose truncated corners overlap (gamma < rho/2)."""
        if self.kind is SetKind.BUDGET:
            return 2.0 * self.gamma >= self.rho
        return True

    def with_rho(self, rho: float, gamma: float | None = None) -> "UncertaintySet":
        if self.kind is SetKind.BUDGET and gamma is None:
            gamma = self.gamma * rho / self.rho
        return UncertaintySet(self.kind, rho, self.n, self.k, gamma)

    def with_shape(self, n: int, k: int) -> "UncertaintySet":
        return UncertaintySet(self.kind, self.rho, n, k, self.gamma)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value, "rho": self.rho}
        if self.gamma is not None:
            out["gamma"] = self.gamma
        out["n"] = self.n
        out["k"] = self.k
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "UncertaintySet":
        if not isinstance(obj, Mapping):
            raise ConfigError("set descriptor must be a JSON object")
        unknown = set(obj) - {"kind", "rho", "gamma", "n", "k"}
        if unknown:
            raise ConfigError(f"unknown set descriptor keys: {sorted(unknown)}")
        missing = {"kind", "rho", "n", "k"} - set(obj)
        if missing:
            raise ConfigError(f"set descriptor missing keys: {sorted(missing)}")
        try:
            return cls(obj["kind"], obj["rho"], obj["n"], obj["k"], obj.get("gamma"))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad set descriptor: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "UncertaintySet":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"set descriptor is not valid JSON: {exc}") from exc
        return cls.from_dict(obj)


# ---------------------------------------------------------------------------
# membership


def _norm_checks(kind: SetKind, rho: float, gamma: float | None, flat: np.ndarray) -> np.ndarray:
    """Vectorized membership over the last axis of ``flat``."""
    tol = 1.0 + MEMBERSHIP_RTOL
    if kind is SetKind.ELLIPSOIDAL:
        return np.sqrt(np.sum(flat * flat, axis=-1)) <= rho * tol
    if kind is SetKind.BOX:
        return np.max(np.abs(flat), axis=-1) <= rho * tol
    l1 = np.sum(np.abs(flat), axis=-1) <= rho * tol
    if kind is SetKind.DIAMOND:
        return l1
    return l1 & (np.max(np.abs(flat), axis=-1) <= gamma * tol)


def contains(uset: UncertaintySet, delta) -> bool:
    """Whether the ``n x k`` matrix ``delta`` lies in ``uset``.

    A relative boundary tolerance of ``1e-12`` is applied to every norm bound.
    """
    arr = np.asarray(delta, dtype=float)
    if arr.shape != (uset.n, uset.k):
        raise DimensionError(f"perturbation has shape {arr.shape}, set expects {(uset.n, uset.k)}")
    return bool(_norm_checks(uset.kind, uset.rho, uset.gamma, arr.reshape(-1)))


def contains_many(uset: UncertaintySet, points) -> np.ndarray:
    """Boolean mask for a stack of points shaped ``(m, d)`` or ``(m, n, k)``."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 3 and arr.shape[1:] == (uset.n, uset.k):
        arr = arr.reshape(arr.shape[0], uset.d)
    if arr.ndim != 2 or arr.shape[1] != uset.d:
        raise DimensionError(f"points have shape {arr.shape}, set dimension is {uset.d}")
    return _norm_checks(uset.kind, uset.rho, uset.gamma, arr)


# ---------------------------------------------------------------------------
# closed forms


def _require_valid(uset: UncertaintySet) -> None:
    if not uset.closed_form_valid:
        raise FormulaInvalidError(
            f"budget closed forms need gamma >= rho/2 (got gamma={uset.gamma}, rho={uset.rho}); "
            "use Monte Carlo estimates instead"
        )


def _corner_mass(uset: UncertaintySet) -> float:
    """``q**d`` with ``q = 1 - gamma/rho``; the scale-free size of one cut corner."""
    q = 1.0 - uset.gamma / uset.rho
    if q <= 0.0:
        return 0.0
    return math.exp(uset.d * math.log(q))


def _ratio_product(base: float, d: int) -> float | None:
    """``base**d / d!`` as a running product of ``base/i``; None on overflow or underflow."""
    acc = 1.0
    for i in range(1, d + 1):
        acc *= base / i
        if acc == 0.0 or math.isinf(acc):
            return None
    return acc


def log_volume(uset: UncertaintySet) -> float:
    """Natural log of the d-dimensional hypervolume (finite for any d)."""
    d, rho = uset.d, uset.rho
    if uset.kind is SetKind.ELLIPSOIDAL:
        return 0.5 * d * math.log(math.pi) - math.lgamma(0.5 * d + 1.0) + d * math.log(rho)
    if uset.kind is SetKind.BOX:
        return d * math.log(2.0 * rho)
    base = d * math.log(2.0 * rho) - math.lgamma(d + 1.0)
    if uset.kind is SetKind.DIAMOND:
        return base
    _require_valid(uset)
    return base + math.log1p(-d * _corner_mass(uset))


def volume(uset: UncertaintySet) -> float:
    """Hypervolume of the set.

    May overflow to ``inf`` or underflow to ``0.0`` in very high dimension;
    :func:`log_volume` is always finite.
    """
    d, rho = uset.d, uset.rho
    if uset.kind is SetKind.BOX:
        try:
            return (2.0 * rho) ** d
        except OverflowError:
            return math.inf
    if uset.kind is SetKind.ELLIPSOIDAL:
        return math.exp(min(log_volume(uset), 710.0))
    if uset.kind is SetKind.BUDGET:
        _require_valid(uset)
    diamond = _ratio_product(2.0 * rho, d)
    if diamond is None:
        return math.exp(min(log_volume(uset), 710.0))
    if uset.kind is SetKind.DIAMOND:
        return diamond
    return diamond * (1.0 - d * _corner_mass(uset))


def _derived_m2(uset: UncertaintySet) -> float:
    d, rho2 = uset.d, uset.rho * uset.rho
    if uset.kind is SetKind.ELLIPSOIDAL:
        return rho2 / (d + 2)
    if uset.kind is SetKind.BOX:
        return rho2 / 3.0
    if uset.kind is SetKind.DIAMOND:
        return 2.0 * rho2 / ((d + 1) * (d + 2))
    _require_valid(uset)
    g = uset.gamma / uset.rho
    qd = _corner_mass(uset)
    poly = (d * d + 3 * d - 2) * g * g + (4 - 2 * d) * g + 2 * d
    return rho2 * (2.0 - qd * poly) / ((d + 1) * (d + 2) * (1.0 - d * qd))


def _paper_lambda(uset: UncertaintySet) -> float:
    n, k, d, rho2 = uset.n, uset.k, uset.d, uset.rho * uset.rho
    if uset.kind is SetKind.ELLIPSOIDAL:
        return rho2 / k
    if uset.kind is SetKind.BOX:
        return n * rho2 / 3.0
    if uset.kind is SetKind.DIAMOND:
        return 2.0 * n * rho2 / ((d + 2) * (d + 1))
    _require_valid(uset)
    g = uset.gamma / uset.rho
    qd = _corner_mass(uset)
    # denominator read literally: (d+1)(d+2)(rho^d - (rho-gamma)^d), factored by rho^d
    head = 2.0 * n * rho2 / ((d + 1) * (d + 2))
    tail = n * rho2 * qd * ((d * d + 3 * d - 2) * g * g + (4 - 2 * d) * g) / ((d + 1) * (d + 2) * (1.0 - qd))
    return head - tail


def per_entry_second_moment(uset: UncertaintySet, mode: PenaltyMode | str = PenaltyMode.DERIVED) -> float:
    """Average of one squared coordinate under the uniform law on ``uset``.

    In paper mode this is the published penalty divided by ``n``.
    """
    mode = PenaltyMode(mode)
    if mode is PenaltyMode.DERIVED:
        return _derived_m2(uset)
    return _paper_lambda(uset) / uset.n


def ridge_lambda(uset: UncertaintySet, mode: PenaltyMode | str = PenaltyMode.DERIVED) -> float:
    """Ridge penalty equivalent to averaging the squared loss over ``uset``."""
    mode = PenaltyMode(mode)
    if mode is PenaltyMode.DERIVED:
        return uset.n * _derived_m2(uset)
    return _paper_lambda(uset)


class MomentSource(str, enum.Enum):
    CLOSED_FORM = "closed_form"
    MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class MomentReport:
    per_entry_mean: float
    per_entry_second_moment: float
    cross_moment: float
    volume: float
    source: MomentSource


def closed_form_moments(uset: UncertaintySet, mode: PenaltyMode | str = PenaltyMode.DERIVED) -> MomentReport:
    return MomentReport(
        per_entry_mean=0.0,
        per_entry_second_moment=per_entry_second_moment(uset, mode),
        cross_moment=0.0,
        volume=volume(uset),
        source=MomentSource.CLOSED_FORM,
    )
