"""Uniform samplers over the uncertainty sets.

``hit_and_run`` is the production sampler (any dimension, approximately
uniform).  ``rejection_sample`` is exact but only practical in low dimension;
the audit uses it as ground truth.  ``direct_sample`` uses per-set exact
constructions and stays cheap in the thousands of dimensions the experiment
harness needs, where hit-and-run mixes slowly.  ``nested_level_sample`` draws from a
larger set while excluding a smaller one, so that successive perturbation
levels are genuinely increasing.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import ConfigError, SamplingError
from .geometry import SetKind, UncertaintySet, contains_many

MAX_REJECTION_DIM = 12
DEFAULT_MAX_PROPOSALS = 200_000_000
_BLOCK_ELEMS = 1 << 18
_REJECTION_BLOCK = 1 << 16


class SamplingMethod(str, enum.Enum):
    HIT_AND_RUN = "har"
    REJECTION = "rej"
    DIRECT = "direct"


@dataclass(frozen=True)
class SamplerConfig:
    """Hit-and-run settings; the chain starts at ``start`` (origin by default)."""

    seed: int = 0
    burn_in: int = 1000
    thinning: int = 10
    start: tuple | None = None

    def __post_init__(self):
        if int(self.seed) != self.seed or self.seed < 0 or self.seed >= 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if int(self.burn_in) != self.burn_in or self.burn_in < 0:
            raise ConfigError(f"burn_in must be a nonnegative integer, got {self.burn_in!r}")
        if int(self.thinning) != self.thinning or self.thinning < 1:
            raise ConfigError(f"thinning must be >= 1, got {self.thinning!r}")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "burn_in", int(self.burn_in))
        object.__setattr__(self, "thinning", int(self.thinning))
        if self.start is not None:
            object.__setattr__(self, "start", tuple(float(v) for v in np.ravel(self.start)))


@dataclass(frozen=True)
class PerturbationBatch:
    """Immutable stack of sampled perturbation matrices, shape ``(count, n, k)``."""

    uset: UncertaintySet
    samples: np.ndarray
    seed: int
    method: SamplingMethod
    proposals: int = 0
    accepted: int = 0
    config: SamplerConfig | None = field(default=None, repr=False)

    def __post_init__(self):
        self.samples.setflags(write=False)

    def __len__(self):
        return self.samples.shape[0]

    def __iter__(self):
        return iter(self.samples)

    @property
    def flat(self) -> np.ndarray:
        return self.samples.reshape(len(self), self.uset.d)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else float("nan")


class HitAndRunChain:
    """A single hit-and-run chain that owns its RNG.

    Random numbers are drawn in fixed-size blocks (normals for the direction,
    then one uniform per step), so the sample path depends only on the seed,
    the set and the start point, not on how draws are split across calls.
    """

    def __init__(self, uset: UncertaintySet, config: SamplerConfig | None = None):
        config = config or SamplerConfig()
        self.uset = uset
        self.config = config
        d = uset.d
        if config.start is None:
            x = np.zeros(d)
        else:
            x = np.array(config.start, dtype=float)
            if x.shape != (d,):
                raise ConfigError(f"start has {x.size} entries, set dimension is {d}")
            if not contains_many(uset, x[None, :])[0]:
                raise ConfigError("start point lies outside the set")
        self._x = x
        self._rng = np.random.default_rng(config.seed)
        self._block = max(64, _BLOCK_ELEMS // d)
        self._dirs = np.empty((0, d))
        self._unif = np.empty(0)
        self._offset = 0
        self._step = 0
        self._kind = uset.kind.code
        self._gamma = uset.gamma if uset.gamma is not None else 0.0

    def _refill(self):
        d = self.uset.d
        dirs = self._rng.standard_normal((self._block, d))
        zero = ~np.any(dirs != 0.0, axis=1)
        while zero.any():
            dirs[zero] = self._rng.standard_normal((int(zero.sum()), d))
            zero = ~np.any(dirs != 0.0, axis=1)
        self._dirs = dirs
        self._unif = self._rng.random(self._block)
        self._offset = 0

    def draw(self, count: int) -> np.ndarray:
        """Next ``count`` recorded states, shape ``(count, d)``."""
        cfg = self.config
        out = np.empty((count, self.uset.d))
        pos = 0
        while pos < count:
            if self._offset == len(self._unif):
                self._refill()
            done = max(0, self._step - cfg.burn_in) // cfg.thinning if self._step > cfg.burn_in else 0
            target = cfg.burn_in + (done + count - pos) * cfg.thinning
            m = min(target - self._step, len(self._unif) - self._offset)
            lo, hi = self._offset, self._offset + m
            pos = _backend.run_chain(
                self._kind, self.uset.rho, self._gamma, self._x,
                self._dirs[lo:hi], self._unif[lo:hi],
                self._step, cfg.burn_in, cfg.thinning, out, pos,
            )
            self._step += m
            self._offset = hi
        return out


def _check_members(uset: UncertaintySet, flat: np.ndarray) -> None:
    inside = contains_many(uset, flat)
    if not inside.all():
        bad = int((~inside).sum())
        raise SamplingError(f"{bad} sampled points fell outside the {uset.kind.value} set")


def hit_and_run(uset: UncertaintySet, config: SamplerConfig | None = None, count: int = 1) -> PerturbationBatch:
    """Approximately uniform samples from ``uset`` by hit-and-run.

    Chord endpoints are exact for the box and the ball, and found by a
    50-step bisection on the l1 profile for the diamond and budget sets
    (after clipping to the entrywise cap for the latter).
    """
    if count < 1:
        raise ConfigError("count must be positive")
    config = config or SamplerConfig()
    chain = HitAndRunChain(uset, config)
    flat = chain.draw(count)
    _check_members(uset, flat)
    return PerturbationBatch(
        uset, flat.reshape(count, uset.n, uset.k), config.seed,
        SamplingMethod.HIT_AND_RUN, proposals=count, accepted=count, config=config,
    )


def rejection_sample(uset: UncertaintySet, seed: int, count: int,
                     max_proposals: int = DEFAULT_MAX_PROPOSALS) -> PerturbationBatch:
    """Exact uniform samples by proposing in ``[-rho, rho]^d``.

    ``proposals`` counts every candidate up to the last accepted one, so
    ``acceptance_rate`` estimates ``volume / (2 rho)^d``.
    """
    if uset.d > MAX_REJECTION_DIM:
        raise ConfigError(
            f"rejection sampling is limited to d <= {MAX_REJECTION_DIM} (got d={uset.d}); "
            "use hit_and_run for larger sets"
        )
    if count < 1:
        raise ConfigError("count must be positive")
    rng = np.random.default_rng(seed)
    d, rho = uset.d, uset.rho
    kept = []
    n_kept = 0
    proposals = 0
    while n_kept < count:
        if proposals >= max_proposals:
            raise SamplingError(
                f"rejection sampler hit {max_proposals} proposals with {n_kept}/{count} accepted; "
                "use hit_and_run instead"
            )
        block = rng.uniform(-rho, rho, size=(_REJECTION_BLOCK, d))
        mask = contains_many(uset, block)
        need = count - n_kept
        idx = np.flatnonzero(mask)
        if len(idx) >= need:
            proposals += int(idx[need - 1]) + 1
            kept.append(block[idx[:need]])
            n_kept = count
        else:
            proposals += _REJECTION_BLOCK
            kept.append(block[idx])
            n_kept += len(idx)
    flat = np.concatenate(kept)
    return PerturbationBatch(
        uset, flat.reshape(count, uset.n, uset.k), int(seed),
        SamplingMethod.REJECTION, proposals=proposals, accepted=count,
    )


def _direct_block(uset: UncertaintySet, rng: np.random.Generator, m: int) -> np.ndarray:
    d, rho = uset.d, uset.rho
    if uset.kind is SetKind.BOX:
        return rng.uniform(-rho, rho, size=(m, d))
    if uset.kind is SetKind.ELLIPSOIDAL:
        g = rng.standard_normal((m, d))
        radius = rho * rng.random(m) ** (1.0 / d)
        norms = np.linalg.norm(g, axis=1)
        return g * (radius / norms)[:, None]
    # (E_1..E_{d+1}) / sum is uniform on the simplex; drop the slack coordinate
    e = rng.standard_exponential((m, d + 1))
    signs = np.where(rng.random((m, d)) < 0.5, -1.0, 1.0)
    pts = rho * signs * e[:, :d] / e.sum(axis=1)[:, None]
    if uset.kind is SetKind.BUDGET:
        pts = pts[np.max(np.abs(pts), axis=1) <= uset.gamma]
    return pts


def direct_sample(uset: UncertaintySet, seed: int, count: int,
                  max_proposals: int = DEFAULT_MAX_PROPOSALS) -> PerturbationBatch:
    """Exact uniform samples in any dimension.

    Box: independent uniforms.  Ball: Gaussian direction with radius
    ``rho * U**(1/d)``.  Diamond: signed normalized exponential spacings.
    Budget: diamond draws rejected when an entry exceeds ``gamma``
    (acceptance ``1 - d (1 - gamma/rho)**d`` inside the closed-form window).
    """
    if count < 1:
        raise ConfigError("count must be positive")
    rng = np.random.default_rng(seed)
    kept = []
    n_kept = proposals = 0
    while n_kept < count:
        if proposals >= max_proposals:
            raise SamplingError(f"direct sampler hit {max_proposals} proposals with {n_kept}/{count} accepted")
        m = count - n_kept if uset.kind is not SetKind.BUDGET else max(count - n_kept, 64)
        block = _direct_block(uset, rng, m)
        proposals += m
        take = block[: count - n_kept]
        kept.append(take)
        n_kept += len(take)
    flat = np.concatenate(kept)
    _check_members(uset, flat)
    return PerturbationBatch(
        uset, flat.reshape(count, uset.n, uset.k), int(seed),
        SamplingMethod.DIRECT, proposals=proposals, accepted=count,
    )


def check_nesting(set_small: UncertaintySet, set_large: UncertaintySet) -> None:
    if (set_small.kind, set_small.n, set_small.k) != (set_large.kind, set_large.n, set_large.k):
        raise ConfigError("nested sets must share kind and shape")
    if not set_small.rho < set_large.rho:
        raise ConfigError(f"inner radius {set_small.rho} must be below outer radius {set_large.rho}")
    if set_small.kind is SetKind.BUDGET and set_small.gamma > set_large.gamma:
        raise ConfigError("inner budget cap exceeds the outer cap; inner set is not contained")


def nested_level_sample(set_small: UncertaintySet, set_large: UncertaintySet,
                        config: SamplerConfig | None = None, count: int = 1,
                        max_states: int | None = None,
                        method: SamplingMethod | str = SamplingMethod.HIT_AND_RUN) -> PerturbationBatch:
    """Uniform draws on ``set_large`` conditioned to fall outside ``set_small``.

    States come from a hit-and-run chain on ``set_large`` (or from
    :func:`direct_sample` when ``method="direct"``) and are post-filtered.
    ``proposals`` is the number of states inspected, so the acceptance rate
    estimates ``1 - vol(small)/vol(large)``.
    """
    check_nesting(set_small, set_large)
    if count < 1:
        raise ConfigError("count must be positive")
    config = config or SamplerConfig()
    method = SamplingMethod(method)
    if max_states is None:
        max_states = 1000 * count + 10_000
    if method is SamplingMethod.HIT_AND_RUN:
        draw = HitAndRunChain(set_large, config).draw
    elif method is SamplingMethod.DIRECT:
        rng = np.random.default_rng(config.seed)

        def draw(m):
            out = _direct_block(set_large, rng, m)
            while len(out) < m:
                out = np.concatenate([out, _direct_block(set_large, rng, m)])
            return out[:m]
    else:
        raise ConfigError("nested sampling supports the 'har' and 'direct' methods")
    kept = []
    n_kept = 0
    inspected = 0
    while n_kept < count:
        if inspected >= max_states:
            raise SamplingError(f"nested sampler inspected {inspected} states but kept only {n_kept}")
        want = count - n_kept
        states = draw(want)
        idx = np.flatnonzero(~contains_many(set_small, states))
        inspected += want
        kept.append(states[idx])
        n_kept += len(idx)
    flat = np.concatenate(kept)
    _check_members(set_large, flat)
    return PerturbationBatch(
        set_large, flat.reshape(count, set_large.n, set_large.k), config.seed,
        method, proposals=inspected, accepted=count, config=config,
    )
