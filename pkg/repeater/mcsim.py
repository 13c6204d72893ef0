"""Slotted Monte Carlo simulator for the repeater generation protocols.

Each segment attempts a pair once per slot and keeps it once made. Swapping takes no
time. In the realistic and lower-bound variants every purification attempt takes one
slot. The upper-bound variant and purify-last reproduce their closed forms, which
count generation slots only.

Trials run in fixed-size blocks. Block ``b`` draws from a Philox stream keyed by
``SeedSequence(seed, spawn_key=(b,))`` and block results are reduced in block order
with exact integer sums, so estimates do not depend on the number of workers.
"""

from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple, Union
import math
import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from repeater.chain import Placement, Strategy, fidelity_trace
from repeater.errors import ConfigurationError, validate_count, validate_fidelity
from repeater.gates import GateQuality, purify_raw, swap_raw
from repeater.waiting import (
    z_multiplexed,
    z_parallel_rows,
    z_stable,
    z_two_columns,
)

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_SIZE = 8192


class Protocol(str, Enum):
    PARALLEL = "parallel"
    MULTIPLEXED = "multiplexed"
    PARALLEL_ROWS = "parallel_rows"
    PURIFY_FIRST = "purify_first"
    PURIFY_LAST = "purify_last"


class PurifyVariant(str, Enum):
    UPPER = "upper"
    LOWER = "lower"
    REALISTIC = "realistic"


class SimConfig(BaseModel):
    """Monte Carlo run description.

    ``multiplexed`` and ``parallel_rows`` always use two columns and ignore ``n``.
    For ``purify_first`` the number of purification rounds is ``len(p1)``.
    """

    model_config = ConfigDict(frozen=True)

    seed: int = Field(..., ge=0, lt=2**64)
    trials: int = Field(..., ge=1)
    protocol: Protocol
    n: int = Field(default=0, ge=0)
    rows: int = Field(default=1, ge=1)
    variant: PurifyVariant = PurifyVariant.REALISTIC
    p0: float = Field(..., ge=0.0, le=1.0)
    p1: Tuple[float, ...] = (1.0,)
    block_size: int = Field(default=DEFAULT_BLOCK_SIZE, ge=1)
    workers: int = Field(default=1, ge=1)
    keep_histogram: bool = False

    @field_validator("p1", mode="before")
    @classmethod
    def _as_rounds(cls, value: Union[float, Sequence[float]]) -> Tuple[float, ...]:
        if isinstance(value, (int, float)):
            return (float(value),)
        return tuple(float(v) for v in value)

    @field_validator("p1")
    @classmethod
    def _check_rounds(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if not value:
            raise ValueError("p1 needs at least one round")
        if any(not 0.0 <= p <= 1.0 for p in value):
            raise ValueError(f"p1 values must lie in [0, 1], got {value}")
        return value


class SimEstimate(BaseModel):
    protocol: Protocol
    mean_slots: float = Field(..., ge=1.0)
    std_error_slots: float = Field(..., ge=0.0)
    trials: int
    min_slots: int
    max_slots: int
    histogram: Optional[List[int]] = Field(default=None, description="Counts indexed by slot count")


class _BlockResult(NamedTuple):
    total: int
    total_sq: int
    minimum: int
    maximum: int
    histogram: Optional[np.ndarray]


def _rng_for_block(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _segment_starts(repeats: np.ndarray) -> np.ndarray:
    starts = np.zeros(len(repeats), dtype=np.int64)
    np.cumsum(repeats[:-1], out=starts[1:])
    return starts


def _repeated_maxima(
    rng: np.random.Generator, repeats: np.ndarray, width: int, p0: float
) -> np.ndarray:
    """For each entry, total slots of ``repeats`` full generations of ``width`` segments."""
    cycles = rng.geometric(p0, size=(int(repeats.sum()), width)).max(axis=1)
    return np.add.reduceat(cycles, _segment_starts(repeats))


def _purified_units(
    rng: np.random.Generator,
    count: int,
    level: int,
    p0: float,
    p1: Sequence[float],
    fidelity: Optional[float] = None,
    gq: Optional[GateQuality] = None,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Slots (and optionally fidelities) of ``count`` pairs purified ``level`` times.

    A level-j pair is made from two level-(j-1) pairs and one purification slot; a failed
    purification destroys both and the pair is rebuilt from scratch.
    """
    if level == 0:
        slots = rng.geometric(p0, size=count)
        return slots, None if fidelity is None else np.full(count, fidelity)

    attempts = rng.geometric(p1[level - 1], size=count)
    total = int(attempts.sum())
    left, left_fid = _purified_units(rng, total, level - 1, p0, p1, fidelity, gq)
    right, _ = _purified_units(rng, total, level - 1, p0, p1, fidelity, gq)
    starts = _segment_starts(attempts)
    # the attempt itself takes one slot once both pairs exist
    slots = np.add.reduceat(np.maximum(left, right) + 1, starts)
    if left_fid is None or gq is None:
        return slots, None
    # both inputs of an attempt carry the same fidelity
    purified, _success = purify_raw(left_fid, gq)
    return slots, purified[starts + attempts - 1]


def _swap_columns(fidelities: np.ndarray, gq: GateQuality) -> np.ndarray:
    """Connect adjacent columns level by level until one column remains."""
    while fidelities.shape[1] > 1:
        fidelities = swap_raw(fidelities[:, 0::2], gq)
    return fidelities[:, 0]


class RepeaterSimulator:
    """Immutable Monte Carlo runner for one :class:`SimConfig`."""

    def __init__(self, config: SimConfig):
        self._config = config
        self._check_config()
        self._kernel = self._select_kernel()

    @property
    def config(self) -> SimConfig:
        return self._config

    def _check_config(self) -> None:
        cfg = self._config
        if cfg.p0 == 0.0:
            raise ConfigurationError("p0 = 0: generation never succeeds")
        purifying = cfg.protocol in (Protocol.PURIFY_FIRST, Protocol.PURIFY_LAST)
        if purifying and any(p == 0.0 for p in cfg.p1):
            raise ConfigurationError("p1 = 0: purification never succeeds")
        if cfg.protocol is Protocol.PURIFY_LAST:
            if cfg.n < 1:
                raise ConfigurationError("purify_last needs n >= 1")
            if len(cfg.p1) != 1:
                raise ConfigurationError("purify_last takes a single purification round")
        if (
            cfg.protocol is Protocol.PURIFY_FIRST
            and cfg.variant is not PurifyVariant.REALISTIC
            and len(cfg.p1) != 1
        ):
            raise ConfigurationError(f"{cfg.variant.value} variant takes one purification round")

    def _select_kernel(self) -> Callable[[np.random.Generator, int], np.ndarray]:
        cfg = self._config
        p0, n, r = cfg.p0, cfg.n, cfg.rows
        columns = 2**n

        def parallel(rng: np.random.Generator, size: int) -> np.ndarray:
            return rng.geometric(p0, size=(size, columns)).max(axis=1)

        def multiplexed(rng: np.random.Generator, size: int) -> np.ndarray:
            return rng.geometric(p0, size=(size, 2, r)).min(axis=2).max(axis=1)

        def parallel_rows(rng: np.random.Generator, size: int) -> np.ndarray:
            return rng.geometric(p0, size=(size, r, 2)).max(axis=2).min(axis=1)

        def purify_upper(rng: np.random.Generator, size: int) -> np.ndarray:
            rounds = rng.geometric(cfg.p1[0], size=(size, columns)).max(axis=1)
            return _repeated_maxima(rng, rounds, 2 * columns, p0)

        def purify_lower(rng: np.random.Generator, size: int) -> np.ndarray:
            generation = rng.geometric(p0, size=(size, 2 * columns)).max(axis=1)
            retries = rng.geometric(cfg.p1[0], size=(size, columns)).max(axis=1)
            return generation + retries

        def purify_realistic(rng: np.random.Generator, size: int) -> np.ndarray:
            units, _ = _purified_units(rng, size * columns, len(cfg.p1), p0, cfg.p1)
            return units.reshape(size, columns).max(axis=1)

        def purify_last(rng: np.random.Generator, size: int) -> np.ndarray:
            attempts = rng.geometric(cfg.p1[0], size=size)
            return _repeated_maxima(rng, attempts, 2 * columns, p0)

        if cfg.protocol is Protocol.PARALLEL:
            return parallel
        if cfg.protocol is Protocol.MULTIPLEXED:
            return multiplexed
        if cfg.protocol is Protocol.PARALLEL_ROWS:
            return parallel_rows
        if cfg.protocol is Protocol.PURIFY_LAST:
            return purify_last
        return {
            PurifyVariant.UPPER: purify_upper,
            PurifyVariant.LOWER: purify_lower,
            PurifyVariant.REALISTIC: purify_realistic,
        }[cfg.variant]

    def _run_block(self, block: int) -> _BlockResult:
        cfg = self._config
        size = min(cfg.block_size, cfg.trials - block * cfg.block_size)
        slots = self._kernel(_rng_for_block(cfg.seed, block), size).astype(np.int64)
        return _BlockResult(
            total=int(slots.sum()),
            total_sq=int(np.dot(slots, slots)),
            minimum=int(slots.min()),
            maximum=int(slots.max()),
            histogram=np.bincount(slots) if cfg.keep_histogram else None,
        )

    def run(self) -> SimEstimate:
        cfg = self._config
        blocks = math.ceil(cfg.trials / cfg.block_size)
        logger.info(
            f"Simulating {cfg.protocol.value} with {cfg.trials} trials in {blocks} blocks "
            f"on {cfg.workers} worker(s)"
        )
        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(self._run_block, range(blocks)))
        else:
            results = [self._run_block(b) for b in range(blocks)]
        return self._reduce(results)

    def _reduce(self, results: List[_BlockResult]) -> SimEstimate:
        cfg = self._config
        N = cfg.trials
        S = sum(r.total for r in results)
        SS = sum(r.total_sq for r in results)
        variance = (N * SS - S * S) / (N * (N - 1)) if N > 1 else 0.0

        histogram = None
        if cfg.keep_histogram:
            length = max(len(r.histogram) for r in results if r.histogram is not None)
            merged = np.zeros(length, dtype=np.int64)
            for r in results:
                if r.histogram is not None:
                    merged[: len(r.histogram)] += r.histogram
            histogram = [int(c) for c in merged]

        return SimEstimate(
            protocol=cfg.protocol,
            mean_slots=S / N,
            std_error_slots=math.sqrt(max(variance, 0.0) / N),
            trials=N,
            min_slots=min(r.minimum for r in results),
            max_slots=max(r.maximum for r in results),
            histogram=histogram,
        )


def simulate(config: SimConfig) -> SimEstimate:
    """Run the slotted process described by ``config``."""
    return RepeaterSimulator(config).run()


def analytic_mean(config: SimConfig) -> Optional[float]:
    """Closed-form mean slot count for the configured protocol, when one exists."""
    cfg = config
    p0, n = cfg.p0, cfg.n
    if p0 == 0.0:
        return None
    if cfg.protocol is Protocol.PARALLEL:
        return z_stable(2**n, p0)
    if cfg.protocol is Protocol.MULTIPLEXED:
        return z_multiplexed(cfg.rows, 1.0 - p0)
    if cfg.protocol is Protocol.PARALLEL_ROWS:
        return z_parallel_rows(cfg.rows, 1.0 - p0)
    p1 = cfg.p1[0]
    if p1 == 0.0:
        return None
    if cfg.protocol is Protocol.PURIFY_LAST:
        return z_stable(2 ** (n + 1), p0) / p1
    if len(cfg.p1) != 1:
        return None
    if cfg.variant is PurifyVariant.UPPER:
        return z_stable(2 ** (n + 1), p0) * z_stable(2**n, p1)
    if cfg.variant is PurifyVariant.LOWER:
        return z_stable(2 ** (n + 1), p0) + z_stable(2**n, p1)
    if n == 0:
        return (z_two_columns(p0) + 1.0) / p1
    return None


def z_score(estimate: SimEstimate, reference: float) -> Optional[float]:
    """Standardised distance of the estimate from a reference mean."""
    if estimate.std_error_slots == 0.0:
        return 0.0 if estimate.mean_slots == reference else None
    return (estimate.mean_slots - reference) / estimate.std_error_slots


def dkw_epsilon(trials: int, alpha: float = 0.01) -> float:
    """Dvoretzky-Kiefer-Wolfowitz band half-width at confidence 1 - alpha."""
    validate_count("trials", trials, minimum=1)
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * trials))


def empirical_cdf(histogram: Sequence[int]) -> np.ndarray:
    """P(slots <= t) for t = 0, 1, ..., len(histogram) - 1."""
    counts = np.asarray(histogram, dtype=np.float64)
    return np.cumsum(counts) / counts.sum()


def simulate_chain_fidelity(F0: float, strategy: Strategy, trials: int, seed: int) -> np.ndarray:
    """Final fidelity of every trial of the strategy's generation process."""
    validate_fidelity(F0, strict_lower=True)
    validate_count("trials", trials, minimum=1)
    trace = fidelity_trace(F0, strategy)
    gq = strategy.gate_quality
    columns = 2**strategy.nesting_levels
    rng = _rng_for_block(seed, 0)

    if strategy.purif_placement is Placement.LAST_LEVEL:
        # two full chains, then one purification of their end-to-end pairs
        chains = _swap_columns(np.full((trials, 2 * columns), F0).reshape(2 * trials, columns), gq)
        purified, _success = purify_raw(chains.reshape(trials, 2)[:, 0], gq)
        return np.minimum(purified, 1.0)

    units, fidelities = _purified_units(
        rng,
        trials * columns,
        strategy.purif_rounds,
        0.5,
        trace.purification_probs,
        fidelity=F0,
        gq=gq,
    )
    assert fidelities is not None
    logger.debug(f"Chain fidelity sample: mean generation time {units.mean():.3f} slots")
    return np.minimum(_swap_columns(fidelities.reshape(trials, columns), gq), 1.0)
