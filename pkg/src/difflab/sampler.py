"""Exponential-integrator reverse sampler.

For ``k = 1..K`` with forward step interval ``[lo_k, hi_k]`` (``hi_k = T - (k-1) eta``)

    y_k = y_{k-1} + F_k y_{k-1} + G_k s(y_{k-1}, hi_k) + sqrt(G_k) xi_k,

``F_k = int f`` and ``G_k = int g^2`` over the step, ``y_0 ~ N(0, a2(T) I)``.

Reproducibility
---------------
Chains are processed in fixed blocks of ``block_size`` rows. Block ``b``
owns two Philox streams, ``key = seed`` and ``counter = [0, 0, b, s]``:
stream ``s = 0`` supplies the initial state and the per-step noise,
stream ``s = 1`` supplies score perturbations. Draws inside a block are
sequential in the step index, so the output is a function of
``(seed, chains, K, d, block_size)`` only. Per-block moment sums are merged
in block order, which makes results bit-identical for any thread count.
"""

from __future__ import annotations

import enum
import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .errors import DivergenceError, DomainError
from .gaussian_oracle import GaussianModel, marginal_variance, step_edges
from .schedule import ScheduleSpec

DIVERGENCE_THRESHOLD = 1e12
DEFAULT_BLOCK = 4096
REFINE = 64


class ScoreFn(Protocol):
    def __call__(self, x: np.ndarray, t: float, rng: np.random.Generator) -> np.ndarray: ...


class ScoreMode(str, enum.Enum):
    EXACT_GAUSSIAN = "EXACT_GAUSSIAN"
    PERTURBED = "PERTURBED"
    CUSTOM = "CUSTOM"


@dataclass(frozen=True)
class SamplerConfig:
    d: int
    K: int
    eta: float
    seed: int = 0
    chains: int = 1
    score_mode: ScoreMode = ScoreMode.EXACT_GAUSSIAN
    M: float = 0.0
    threads: int = 1
    block_size: int = DEFAULT_BLOCK
    keep_states: bool = False

    def __post_init__(self):
        object.__setattr__(self, "score_mode", ScoreMode(self.score_mode))
        if int(self.K) != self.K or self.K < 1:
            raise DomainError(f"K must be an integer >= 1, got {self.K}")
        if not self.eta > 0:
            raise DomainError(f"eta must be positive, got {self.eta}")
        if self.chains < 1 or self.d < 1:
            raise DomainError("chains and d must be >= 1")
        if self.threads < 1 or self.block_size < 1:
            raise DomainError("threads and block_size must be >= 1")
        if self.M < 0:
            raise DomainError("M must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be an unsigned 64-bit integer")

    def check_horizon(self, spec: ScheduleSpec) -> None:
        T = spec.horizon_T
        if abs(self.K * self.eta - T) > 1e-12 * T:
            raise DomainError(f"K*eta = {self.K * self.eta} does not match horizon T = {T}")

    def refined(self, factor: int) -> "SamplerConfig":
        return SamplerConfig(
            d=self.d,
            K=self.K * factor,
            eta=self.eta / factor,
            seed=self.seed,
            chains=self.chains,
            score_mode=self.score_mode,
            M=self.M,
            threads=self.threads,
            block_size=self.block_size,
            keep_states=self.keep_states,
        )

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "K": self.K,
            "eta": self.eta,
            "seed": self.seed,
            "chains": self.chains,
            "score_mode": self.score_mode.value,
            "M": self.M,
            "block_size": self.block_size,
        }


def exact_gaussian_score(model: GaussianModel, spec: ScheduleSpec) -> ScoreFn:
    """Score ``-x / v(t)`` of the forward marginal for Gaussian data."""

    def score(x: np.ndarray, t: float, rng: np.random.Generator | None = None) -> np.ndarray:
        return -x / float(marginal_variance(model, spec, t))

    # the sampler folds linear scores s(x, t) = linear_coef(t) * x into one multiply
    score.linear_coef = lambda t: -1.0 / marginal_variance(model, spec, t)
    return score


def perturbed_score(base: ScoreFn, M: float, rng: np.random.Generator | None = None) -> ScoreFn:
    """Add an independent ``N(0, M^2/d I)`` vector to each score evaluation.

    The error has ``E|e|^2 = M^2`` exactly, i.e. L2 norm M in expectation
    (not per sample). Noise comes from ``rng`` if given, otherwise from the
    generator the sampler passes in (its perturbation stream).
    """
    if M < 0:
        raise DomainError("M must be nonnegative")
    if M == 0:
        return base

    def score(x: np.ndarray, t: float, call_rng: np.random.Generator | None = None) -> np.ndarray:
        gen = rng if rng is not None else call_rng
        if gen is None:
            raise DomainError("perturbed score needs a random generator")
        x = np.asarray(x)
        scale = M / math.sqrt(x.shape[-1])
        return base(x, t, call_rng) + scale * gen.standard_normal(x.shape)

    if rng is None and hasattr(base, "linear_coef"):
        # lets the sampler keep its linear fast path and add the noise itself
        score.linear_coef = base.linear_coef
        score.perturbation_M = M
    return score


def block_streams(seed: int, block: int) -> tuple[np.random.Generator, np.random.Generator]:
    noise = np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, block, 0]))
    perturb = np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, block, 1]))
    return noise, perturb


@dataclass
class Moments:
    """Per-coordinate sums over chains at one step index."""

    count: int
    sum1: np.ndarray
    sum2: np.ndarray

    def merge(self, other: "Moments") -> "Moments":
        return Moments(self.count + other.count, self.sum1 + other.sum1, self.sum2 + other.sum2)

    @property
    def mean(self) -> np.ndarray:
        return self.sum1 / self.count

    @property
    def second_moment(self) -> float:
        """Per-coordinate second moment, averaged over coordinates."""
        return float(np.mean(self.sum2 / self.count))

    @property
    def variance(self) -> float:
        """Per-coordinate centered variance, averaged over coordinates."""
        m = self.mean
        n = self.count
        if n < 2:
            return math.nan
        return float(np.mean((self.sum2 - n * m * m) / (n - 1)))

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "mean_avg": float(np.mean(self.mean)),
            "second_moment": self.second_moment,
            "variance": self.variance,
        }


@dataclass
class RunResult:
    config: SamplerConfig
    schedule: dict
    moments: dict[int, Moments]
    states: np.ndarray | None = None
    model: GaussianModel | None = None
    extra: dict = field(default_factory=dict)

    @property
    def terminal(self) -> Moments:
        return self.moments[self.config.K]

    @property
    def empirical_var(self) -> float:
        return self.terminal.second_moment

    @property
    def w2_moment(self) -> float | None:
        """Moment-matched Gaussian W2 estimate against the data law."""
        if self.model is None:
            return None
        return math.sqrt(self.config.d) * abs(math.sqrt(self.empirical_var) - self.model.sigma0)

    def to_dict(self) -> dict:
        out = {
            "sampler": self.config.to_dict(),
            "schedule": self.schedule,
            "empirical_var": self.empirical_var,
            "terminal": self.terminal.to_dict(),
            "checkpoints": {str(k): m.to_dict() for k, m in sorted(self.moments.items())},
        }
        if self.model is not None:
            out["w2_moment"] = self.w2_moment
        out.update(self.extra)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def write_states(self, path) -> None:
        """Flat binary: header ``<QQ`` (d, chains), then row-major little-endian float64."""
        if self.states is None:
            raise DomainError("run was made without keep_states")
        with open(path, "wb") as fh:
            write_state_matrix(fh, self.states)


def write_state_matrix(fh, states: np.ndarray) -> None:
    chains, d = states.shape
    fh.write(struct.pack("<QQ", d, chains))
    fh.write(np.ascontiguousarray(states, dtype="<f8").tobytes())


def read_state_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        d, chains = struct.unpack("<QQ", fh.read(16))
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.reshape(chains, d)


def _resolve_score(spec, config: SamplerConfig, score, model) -> ScoreFn:
    mode = config.score_mode
    if mode is ScoreMode.CUSTOM:
        if score is None:
            raise DomainError("CUSTOM score mode needs a score function")
        return perturbed_score(score, config.M) if config.M > 0 else score
    if model is None:
        raise DomainError(f"{mode.value} score mode needs a GaussianModel")
    if model.d != config.d:
        raise DomainError(f"model dimension {model.d} != sampler dimension {config.d}")
    base = exact_gaussian_score(model, spec)
    if mode is ScoreMode.PERTURBED:
        return perturbed_score(base, config.M)
    return base


def run_reverse(
    spec: ScheduleSpec,
    config: SamplerConfig,
    score: ScoreFn | None = None,
    model: GaussianModel | None = None,
    checkpoints: tuple[int, ...] | None = None,
) -> RunResult:
    """Simulate ``config.chains`` independent reverse chains.

    Args:
        spec: forward schedule; its horizon must equal ``K * eta``.
        config: run geometry and seed.
        score: required for ``ScoreMode.CUSTOM``.
        model: Gaussian data model for the exact (or perturbed exact) score.
        checkpoints: step indices at which moments are recorded; defaults to
            ``(1, K // 2, K)``.

    Raises:
        DivergenceError: a state coordinate exceeds 1e12 or is not finite.
    """
    config.check_horizon(spec)
    fn = _resolve_score(spec, config, score, model)
    K, d = config.K, config.d
    lo, hi = step_edges(spec.horizon_T, K)
    F = np.asarray(spec.int_f(lo, hi), dtype=float)
    G = np.asarray(spec.int_g2(lo, hi), dtype=float)
    sqrtG = np.sqrt(G)
    sd0 = math.sqrt(float(spec.a2(spec.horizon_T)))
    marks = sorted({k for k in (checkpoints or (1, K // 2, K)) if 0 <= k <= K} | {K})
    bs = config.block_size
    n_blocks = -(-config.chains // bs)

    linear = getattr(fn, "linear_coef", None)
    pert_M = getattr(fn, "perturbation_M", 0.0)
    if linear is not None:
        # y_k = (1 + F_k + G_k * coef(hi_k)) y_{k-1} + sqrt(G_k) xi_k
        mult = 1.0 + F + G * np.asarray(linear(hi), dtype=float)

    def run_block(b: int):
        n = min(bs, config.chains - b * bs)
        noise, perturb = block_streams(config.seed, b)
        y = sd0 * noise.standard_normal((n, d))
        xi = np.empty_like(y)
        work = np.empty_like(y)
        sums = {}
        if 0 in marks:
            sums[0] = Moments(n, y.sum(axis=0), (y * y).sum(axis=0))
        for k in range(1, K + 1):
            i = k - 1
            if linear is not None:
                y *= mult[i]
                if pert_M:
                    perturb.standard_normal(out=work)
                    work *= G[i] * pert_M / math.sqrt(d)
                    y += work
            else:
                s = fn(y, float(hi[i]), perturb)
                np.multiply(s, G[i], out=work)
                y *= 1.0 + F[i]
                y += work
            noise.standard_normal(out=xi)
            xi *= sqrtG[i]
            y += xi
            np.abs(y, out=work)
            peak = work.max()
            if not (peak <= DIVERGENCE_THRESHOLD):
                raise DivergenceError(
                    f"state magnitude {peak:.3g} exceeds {DIVERGENCE_THRESHOLD:g} at step k={k}",
                    step=k,
                )
            if k in marks:
                sums[k] = Moments(n, y.sum(axis=0), (y * y).sum(axis=0))
        return sums, (y if config.keep_states else None)

    if config.threads == 1 or n_blocks == 1:
        outs = [run_block(b) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            outs = list(pool.map(run_block, range(n_blocks)))

    moments: dict[int, Moments] = {}
    for sums, _ in outs:
        for k, m in sums.items():
            moments[k] = m if k not in moments else moments[k].merge(m)
    states = np.concatenate([y for _, y in outs]) if config.keep_states else None
    return RunResult(config, spec.to_dict(), moments, states, model)


def run_fine_reference(
    spec: ScheduleSpec,
    config: SamplerConfig,
    score: ScoreFn | None = None,
    model: GaussianModel | None = None,
    refine: int = REFINE,
) -> RunResult:
    """Same integrator with ``refine`` times more, proportionally shorter steps."""
    if int(refine) != refine or refine < 1:
        raise DomainError("refine must be a positive integer")
    return run_reverse(spec, config.refined(int(refine)), score=score, model=model)


def frozen_score_recursion(model: GaussianModel, spec: ScheduleSpec, K: int) -> np.ndarray:
    """Exact per-coordinate variance trace of the sampler with the exact score.

    With ``s = -y / v(hi_k)`` the update is linear,
    ``y_k = (1 + F_k - G_k / v(hi_k)) y_{k-1} + sqrt(G_k) xi_k``.
    It differs from the integrated-alpha recursion of
    :func:`difflab.gaussian_oracle.variance_recursion` by O(eta) at fixed T.
    """
    lo, hi = step_edges(spec.horizon_T, K)
    F = np.asarray(spec.int_f(lo, hi), dtype=float)
    G = np.asarray(spec.int_g2(lo, hi), dtype=float)
    r = 1.0 + F - G / marginal_variance(model, spec, hi)
    s = np.empty(K + 1)
    s[0] = float(spec.a2(spec.horizon_T))
    for k in range(K):
        s[k + 1] = r[k] ** 2 * s[k] + G[k]
    return s


def make_score(fn: Callable[[np.ndarray, float], np.ndarray]) -> ScoreFn:
    """Adapt a two-argument ``(x, t)`` score to the sampler signature."""

    def score(x: np.ndarray, t: float, rng: np.random.Generator | None = None) -> np.ndarray:
        return fn(x, t)

    return score
