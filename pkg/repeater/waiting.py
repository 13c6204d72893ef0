"""Expected waiting times and rates for synchronized generation over 2^n segments.

All waiting times count elementary slots of length T0. ``Z(N, P)`` is the expected
maximum of N independent geometric(P) variables: the number of slots until every one
of N segments has produced a pair, with successful segments holding their pair.
"""

from enum import Enum
from typing import Annotated, Callable, NamedTuple, Sequence
import math
import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import optimize
from scipy.stats import binom

from repeater.errors import (
    ConvergenceError,
    InvalidParameterError,
    validate_count,
    validate_positive,
    validate_probability,
)

logger = logging.getLogger(__name__)

SuccessProb = Annotated[float, Field(gt=0.0, le=1.0)]

# The alternating binomial sum cancels catastrophically beyond this many columns.
ALTERNATING_SUM_MAX_N = 20
SERIES_REL_TOL = 1e-15
DEFAULT_MAX_TERMS = 10**8
_FIRST_CHUNK = 1024
_MAX_CHUNK = 1 << 20


class EndPurifyMode(str, Enum):
    """Pair count feeding a purification performed after the last swap level."""

    TWO_CHAINS = "two_chains"  # 2^(n+1) pairs: two full chains
    SQUARED = "squared"  # 2^(2n) pairs


class WaitingTime(BaseModel):
    model_config = ConfigDict(frozen=True)

    steps: float = Field(..., ge=1.0, description="Expected number of T0 slots")
    seconds: float = Field(..., gt=0.0)

    @classmethod
    def from_steps(cls, steps: float, slot_time_s: float) -> "WaitingTime":
        return cls(steps=steps, seconds=steps * slot_time_s)


class PurificationTimeBounds(NamedTuple):
    lower_s: float
    approx_s: float
    upper_s: float


def _check_columns(N: int) -> int:
    return validate_count("N", N, minimum=1)


def _check_complement(q: float) -> float:
    if not math.isfinite(q) or q < 0.0:
        raise InvalidParameterError(f"Failure probability q must lie in [0, 1), got {q!r}")
    if q >= 1.0:
        raise InvalidParameterError("Waiting time diverges at q = 1")
    return float(q)


def z_closed(N: int, P: float) -> float:
    """Alternating binomial sum for the expected maximum of N geometric(P) variables."""
    _check_columns(N)
    validate_probability("P", P)
    if P == 1.0:
        return 1.0
    if N > ALTERNATING_SUM_MAX_N:
        logger.debug(f"z_closed: N={N} above alternating-sum cap, using tail sum")
        return z_stable(N, P)

    log_q = math.log1p(-P)
    terms = (
        math.comb(N, k) * (-1) ** (k + 1) / -math.expm1(k * log_q) for k in range(1, N + 1)
    )
    return math.fsum(terms)


def z_recurrence(N: int, P: float) -> float:
    """Expected maximum of N geometrics via the recurrence on the number still pending."""
    _check_columns(N)
    validate_probability("P", P)
    if P == 1.0:
        return 1.0

    q = 1.0 - P
    log_q = math.log1p(-P)
    z = np.zeros(N + 1)
    z[1] = 1.0 / P
    for m in range(2, N + 1):
        # weight of j segments still failing after one slot: C(m, j) q^j p^(m-j)
        weights = binom.pmf(np.arange(1, m), m, q)
        z[m] = (1.0 + float(np.dot(weights, z[1:m]))) / -math.expm1(m * log_q)
    return float(z[N])


def _tail_sum(
    chunk_terms: Callable[[np.ndarray], np.ndarray],
    log_q: float,
    expected_terms: float,
    label: str,
    max_terms: int,
) -> float:
    """Sum 1 + sum_{t>=1} chunk_terms(t) until a term drops below SERIES_REL_TOL of the total."""
    if expected_terms > max_terms:
        raise ConvergenceError(
            f"{label}: series needs about {expected_terms:.3g} terms, cap is {max_terms}"
        )

    parts = [1.0]
    start, chunk = 1, _FIRST_CHUNK
    while True:
        if start > max_terms:
            raise ConvergenceError(
                f"{label}: no convergence within {max_terms} terms (partial {math.fsum(parts)!r})"
            )
        t = np.arange(start, start + chunk, dtype=np.float64)
        terms = chunk_terms(np.exp(t * log_q))
        parts.append(math.fsum(terms))
        total = math.fsum(parts)
        if terms[-1] < SERIES_REL_TOL * total:
            logger.debug(f"{label}: converged after {start + chunk - 1} terms")
            return total
        start += chunk
        chunk = min(chunk * 2, _MAX_CHUNK)


def z_stable(N: int, P: float, max_terms: int = DEFAULT_MAX_TERMS) -> float:
    """Tail sum  sum_{t>=0} (1 - (1 - q^t)^N)  for the expected maximum of N geometrics."""
    _check_columns(N)
    validate_probability("P", P)
    if P == 1.0:
        return 1.0

    log_q = math.log1p(-P)
    expected_terms = (math.log(N) - math.log(SERIES_REL_TOL)) / -log_q

    def terms(x: np.ndarray) -> np.ndarray:
        return -np.expm1(N * np.log1p(-x))

    return _tail_sum(terms, log_q, expected_terms, f"z_stable(N={N}, P={P!r})", max_terms)


def z_two_columns(P: float) -> float:
    """Printed two-column form (1/P)(3 - 2P)/(2 - P)."""
    validate_probability("P", P)
    return (1.0 / P) * (3.0 - 2.0 * P) / (2.0 - P)


def z_three_columns(P: float) -> float:
    """Printed three-column closed form."""
    validate_probability("P", P)
    p = P
    return (p * (19.0 + 3.0 * p * (p - 4.0)) - 11.0) / (p * (p - 2.0) * (p * (p - 3.0) + 3.0))


def waiting_time(n: int, P: float, T0: float) -> WaitingTime:
    """Mean time to fill all 2^n segments."""
    validate_count("n", n)
    validate_positive("T0", T0)
    return WaitingTime.from_steps(z_stable(2**n, P), T0)


def rate_parallel(n: int, P0: float, T0: float) -> float:
    """Exact rate 1/(T0 Z(2^n, P0)) of the parallel scheme."""
    return 1.0 / waiting_time(n, P0, T0).seconds


def rate_parallel_approx(n: int, P0: float, T0: float) -> float:
    """Common (2/3)^n P0/T0 approximation of the parallel rate."""
    validate_count("n", n)
    validate_probability("P0", P0)
    validate_positive("T0", T0)
    return (2.0 / 3.0) ** n * P0 / T0


def z_multiplexed(r: int, q: float) -> float:
    """Two columns of r rows, any row may serve each column: (1 + 2q^r)/(1 - q^{2r})."""
    validate_count("r", r, minimum=1)
    _check_complement(q)
    qr = q**r
    return (1.0 + 2.0 * qr) / (1.0 - qr * qr)


def z_parallel_rows_1_2(q: float) -> float:
    """Two independent rows over two columns; both successes must share a row."""
    _check_complement(q)
    num = 1.0 + q + 5.0 * q**2 + 4.0 * q**4
    den = 1.0 + q + q**2 - q**4 - q**5 - q**6
    return num / den


def z_parallel_rows(r: int, q: float, max_terms: int = DEFAULT_MAX_TERMS) -> float:
    """First completion among r independent two-column rows, as sum_t (1 - (1-q^t)^2)^r."""
    validate_count("r", r, minimum=1)
    _check_complement(q)
    if q == 0.0:
        return 1.0

    log_q = math.log(q)
    expected_terms = -math.log(SERIES_REL_TOL) / (-r * log_q) + 1.0

    def terms(x: np.ndarray) -> np.ndarray:
        return (x * (2.0 - x)) ** r

    return _tail_sum(terms, log_q, expected_terms, f"z_parallel_rows(r={r}, q={q!r})", max_terms)


def effective_p_purified(P0: float, P1: float) -> float:
    """Effective per-segment probability of one generate-twice-and-purify round."""
    validate_probability("P0", P0)
    validate_probability("P1", P1)
    return P0 * P1 * (2.0 - P0) / (3.0 - 2.0 * P0)


def effective_p_multi_round(P0: float, P1_sequence: Sequence[float]) -> float:
    """Fold the per-round effective probability, each round with its own P1."""
    if len(P1_sequence) == 0:
        raise InvalidParameterError("P1_sequence must hold at least one round")
    p = validate_probability("P0", P0)
    for p1 in P1_sequence:
        p = effective_p_purified(p, p1)
    return p


def effective_p_multiplexed(r: int, P0: float) -> float:
    """Effective probability (1 - q^{2r})/(1 + 2 q^r) of an r-row multiplexed unit."""
    validate_count("r", r, minimum=1)
    validate_probability("P0", P0)
    return 1.0 / z_multiplexed(r, 1.0 - P0)


def effective_p_for_steps(n: int, steps: float) -> float:
    """Probability P with Z(2^n, P) = steps."""
    validate_count("n", n)
    if not math.isfinite(steps) or steps < 1.0:
        raise InvalidParameterError(f"steps must be >= 1, got {steps!r}")
    N = 2**n
    if steps == 1.0:
        return 1.0
    if N == 1:
        return 1.0 / steps
    # Z(N, p) > 1/p >= steps on the left end, Z(N, 1) = 1 < steps on the right
    return float(
        optimize.bisect(
            lambda p: z_stable(N, p) - steps, 1.0 / steps, 1.0, xtol=1e-18, rtol=1e-13, maxiter=200
        )
    )


def purification_time_bounds(n: int, P0: float, P1: float, T0: float) -> PurificationTimeBounds:
    """Lower, approximate and upper mean time for one purification round before n swap levels.

    Upper: every purification waits for all 2^(n+1) pairs, failed columns start over.
    Lower: all pairs once, then purification retries without regeneration.
    Approx: the effective probability fed into Z(2^n, .).
    At n = 0 the exact single-segment time is returned for all three.
    """
    validate_count("n", n)
    validate_probability("P0", P0)
    validate_probability("P1", P1)
    validate_positive("T0", T0)

    if n == 0:
        exact = T0 * (3.0 - 2.0 * P0) / (P0 * P1 * (2.0 - P0))
        return PurificationTimeBounds(exact, exact, exact)

    generation = z_stable(2 ** (n + 1), P0)
    purification = z_stable(2**n, P1)
    bounds = PurificationTimeBounds(
        lower_s=T0 * (generation + purification),
        approx_s=T0 * z_stable(2**n, effective_p_purified(P0, P1)),
        upper_s=T0 * generation * purification,
    )
    if not bounds.lower_s <= bounds.approx_s <= bounds.upper_s:
        logger.warning(
            f"Bound ordering lower <= approx <= upper fails at n={n}, P0={P0}, P1={P1}: "
            f"{bounds.lower_s:.6g}, {bounds.approx_s:.6g}, {bounds.upper_s:.6g}"
        )
    return bounds


def rate_purified(n: int, P_L0: float, T0: float) -> float:
    """Rate 1/(T0 Z(2^n, P_L0)) from an effective per-segment probability."""
    return 1.0 / waiting_time(n, P_L0, T0).seconds


def purify_at_end_columns(n: int, mode: EndPurifyMode = EndPurifyMode.TWO_CHAINS) -> int:
    validate_count("n", n, minimum=1)
    return 2 ** (n + 1) if EndPurifyMode(mode) is EndPurifyMode.TWO_CHAINS else 2 ** (2 * n)


def rate_purify_at_end(
    n: int,
    P0: float,
    P1_final: float,
    T0: float,
    mode: EndPurifyMode = EndPurifyMode.TWO_CHAINS,
) -> float:
    """Rate with a single purification after the last swap level."""
    validate_probability("P1_final", P1_final)
    validate_positive("T0", T0)
    return P1_final / (T0 * z_stable(purify_at_end_columns(n, mode), P0))


def p0_effective_temporal(P0: float, n_pulses: int) -> float:
    """Success probability when n_pulses are sent per slot: 1 - (1 - P0)^n_pulses."""
    validate_probability("P0", P0)
    validate_count("n_pulses", n_pulses, minimum=1)
    return 1.0 - (1.0 - P0) ** n_pulses
