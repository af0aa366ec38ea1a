"""Proof-of-work arithmetic, difficulty retargeting and the mat schedule.

Difficulties are plain numbers.  :func:`difficulty_from_target` returns a
:class:`fractions.Fraction` so that the target round-trip is exact; every
other function accepts ints, floats or fractions alike.
"""

from dataclasses import dataclass
from fractions import Fraction
import math
import random

from .hashing import pow_hash

MAX_TARGET = (2**16 - 1) * 2**208
DEFAULT_EPOCH = 2016
DEFAULT_AVT_NET = 600.0
DEFAULT_IPT = 60.0
DEFAULT_CLAMP = 4.0


class InsufficientHistory(ValueError):
    pass


@dataclass(frozen=True)
class Target:
    """PoW threshold ``value`` compared against the top ``width`` bits of the hash.

    ``width=256`` is the real setting.  Smaller widths give desk-scale toy
    puzzles with the same mechanics.
    """

    value: int
    width: int = 256

    def __post_init__(self):
        if not 1 <= self.width <= 256:
            raise ValueError(f"hash width must be in [1, 256], got {self.width}")
        cap = MAX_TARGET if self.width == 256 else 2**self.width
        if not 0 < self.value <= cap:
            raise ValueError(f"target {self.value} outside (0, {cap}]")

    @property
    def probability(self) -> Fraction:
        """Exact per-nonce success probability."""
        return Fraction(self.value, 2**self.width)

    def scaled(self, factor) -> "Target":
        """Target for a difficulty ``factor`` times the current one."""
        cap = MAX_TARGET if self.width == 256 else 2**self.width
        value = int(Fraction(self.value) / Fraction(factor))
        return Target(min(max(value, 1), cap), self.width)


# Default sim target: cheap to satisfy, still a real hash predicate (p = 1/4).
SIM_TARGET = Target(2**14, 16)


def difficulty_from_target(t) -> Fraction:
    value = t.value if isinstance(t, Target) else int(t)
    if value <= 0:
        raise ValueError("target must be positive")
    return Fraction(MAX_TARGET, value)


def target_from_difficulty(d) -> Target:
    if d <= 0:
        raise ValueError("difficulty must be positive")
    return Target(math.floor(Fraction(MAX_TARGET) / Fraction(d)))


def success_probability(d) -> float:
    return 1.0 / (float(d) * 2**32)


def expected_time(d, rate: float) -> float:
    """Expected seconds to find a block at difficulty ``d`` and ``rate`` hashes/s."""
    if rate <= 0:
        raise ValueError("hash rate must be positive")
    return float(d) * 2**32 / rate


def adjust_difficulty(recent, d, epoch: int = DEFAULT_EPOCH, *, epoch_start: float = 0.0,
                      avt_net: float = DEFAULT_AVT_NET, clamp: float = DEFAULT_CLAMP):
    """Retarget after an epoch of standard-block discovery times.

    ``recent`` holds the discovery times of the last ``epoch`` standard
    blocks (dummy blocks must not be included); ``epoch_start`` is the time
    the epoch began.  The correction factor is clamped to
    ``[1/clamp, clamp]``.
    """
    recent = list(recent)
    if len(recent) < epoch:
        raise InsufficientHistory(f"need {epoch} discovery times, got {len(recent)}")
    actual = recent[epoch - 1] - epoch_start
    expected = epoch * avt_net
    factor = expected / actual if actual > 0 else clamp
    factor = min(max(factor, 1.0 / clamp), clamp)
    return d * factor


@dataclass(frozen=True)
class MatSchedule:
    """Shared interval boundaries: interval ``i`` spans ``[boundary(i-1), boundary(i))``."""

    avt_net: float = DEFAULT_AVT_NET
    ipt: float = DEFAULT_IPT

    def __post_init__(self):
        if self.avt_net <= 0 or self.ipt < 0:
            raise ValueError("avt_net must be positive and ipt non-negative")

    @property
    def mat(self) -> float:
        return self.avt_net + self.ipt

    def boundary(self, index: int) -> float:
        if index < 0:
            raise ValueError("index must be non-negative")
        return index * self.mat

    def interval_of(self, t: float) -> int:
        """Index of the interval containing time ``t`` (intervals start at 1)."""
        return int(t // self.mat) + 1

    def window_end(self, index: int) -> float:
        """End of the mining window of interval ``index``; afterwards only reception."""
        return self.boundary(index - 1) + self.avt_net


def mat_boundary(s: MatSchedule, index: int) -> float:
    return s.boundary(index)


def sample_block_interval(rate: float, rng: random.Random) -> float:
    if rate <= 0:
        raise ValueError("rate must be positive")
    return rng.expovariate(rate)


def try_nonce(prev: bytes, nonce: int, t: Target) -> bool:
    return pow_hash(prev, nonce) >> (256 - t.width) < t.value


def search_nonce(prev: bytes, t: Target, start: int = 0, max_trials: int | None = None):
    """Return ``(nonce, trials)`` for the first successful nonce from ``start``.

    Returns ``(None, max_trials)`` if ``max_trials`` hashes all fail.
    """
    shift = 256 - t.width
    nonce = start
    trials = 0
    while max_trials is None or trials < max_trials:
        trials += 1
        if pow_hash(prev, nonce) >> shift < t.value:
            return nonce, trials
        nonce += 1
    return None, trials
