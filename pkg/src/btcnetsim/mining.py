"""Proof-of-work model.

Difficulty/target arithmetic, the sub-minimum automatic difficulty, Bitcoin's
periodic retarget rule, exponential block discovery and a real double
SHA-256 grinding harness used to validate the exponential shortcut.

Difficulty is the ratio of the difficulty-1 target to the current expanded
target, so one block costs ``difficulty * 2**32`` hashes on average.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

from . import kernels

MAX_TARGET = 0xFFFF << 208
UINT256_MAX = (1 << 256) - 1
HASHES_PER_DIFFICULTY = 2**32

# Below this the expanded target no longer fits in 256 bits.
MIN_DIFFICULTY = MAX_TARGET / UINT256_MAX


class DifficultyError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


def compact_to_target(nbits: int) -> int:
    """Expand a 32-bit compact ``nBits`` value into the 256-bit target."""
    if not 0 <= nbits <= 0xFFFFFFFF:
        raise DifficultyError(f"nbits out of 32-bit range: {nbits:#x}")
    size = nbits >> 24
    word = nbits & 0x007FFFFF
    if nbits & 0x00800000 and word:
        raise DifficultyError(f"negative compact target {nbits:08x}")
    if size <= 3:
        target = word >> (8 * (3 - size))
    else:
        target = word << (8 * (size - 3))
    if target > UINT256_MAX:
        raise DifficultyError(f"compact target {nbits:08x} overflows 256 bits")
    return target


def target_to_compact(target: int) -> int:
    """Encode a target with Bitcoin's ``GetCompact`` normalisation."""
    if not 0 <= target <= UINT256_MAX:
        raise DifficultyError("target must fit in 256 unsigned bits")
    size = (target.bit_length() + 7) // 8
    if size <= 3:
        mantissa = target << (8 * (3 - size))
    else:
        mantissa = target >> (8 * (size - 3))
    # the 0x00800000 bit is a sign bit, so push it into the exponent
    if mantissa & 0x00800000:
        mantissa >>= 8
        size += 1
    return (size << 24) | mantissa


@dataclass(frozen=True)
class CompactTarget:
    """A proof-of-work target.

    ``nbits`` is the lossy 4-byte serialisation; ``expanded`` is the exact
    target the miners grind against.  Compact encodings read with
    :meth:`from_nbits` carry the expansion of their own bits.
    """

    nbits: int
    expanded: int

    @classmethod
    def from_nbits(cls, nbits: int) -> "CompactTarget":
        return cls(nbits, compact_to_target(nbits))

    @classmethod
    def from_target(cls, target: int) -> "CompactTarget":
        return cls(target_to_compact(target), target)

    @property
    def hex(self) -> str:
        return f"{self.nbits:08x}"

    def quantized(self) -> "CompactTarget":
        """The target actually representable by ``nbits``."""
        return CompactTarget.from_nbits(self.nbits)


def difficulty_to_target(difficulty: float) -> CompactTarget:
    if not difficulty > 0 or math.isinf(difficulty):
        raise DifficultyError(f"difficulty must be positive and finite, got {difficulty!r}")
    target = round(Fraction(MAX_TARGET) / Fraction(difficulty))
    if target > UINT256_MAX:
        raise OverflowError(
            f"difficulty {difficulty!r} is below the representable minimum {MIN_DIFFICULTY:.3e}"
        )
    return CompactTarget.from_target(target)


def target_to_difficulty(target: Union[CompactTarget, int]) -> float:
    expanded = target.expanded if isinstance(target, CompactTarget) else target
    if expanded <= 0:
        raise DifficultyError("a zero target has no finite difficulty")
    return MAX_TARGET / expanded


def auto_difficulty(target_block_time: float, hash_rates: Sequence[float]) -> float:
    """Difficulty giving one block per ``target_block_time`` for the given hash rates.

    ``t * sum(H) / 2**32``; values below 1 are intended.
    """
    if not hash_rates:
        raise ConfigurationError("automatic difficulty needs at least one miner")
    if not target_block_time > 0:
        raise ConfigurationError("target block time must be positive")
    if any(not h > 0 for h in hash_rates):
        raise ConfigurationError("hash rates must be positive")
    return target_block_time * math.fsum(hash_rates) / HASHES_PER_DIFFICULTY


def block_rate(hash_rate: float, difficulty: float) -> float:
    """Expected blocks per second for one miner."""
    return hash_rate / (difficulty * HASHES_PER_DIFFICULTY)


def sample_block_interval(rng: random.Random, hash_rate: float, difficulty: float) -> float:
    return rng.expovariate(block_rate(hash_rate, difficulty))


def retarget(old: float, actual_elapsed: float, expected_elapsed: float, clamp: float = 4.0) -> float:
    """Bitcoin's retarget: scale by expected/actual, multiplier bounded by ``clamp``.

    Like the reference client, the timespan is clamped rather than the
    quotient, so a zero or negative elapsed time is legal.
    """
    if clamp < 1:
        raise ConfigurationError("clamp factor must be >= 1")
    lo = expected_elapsed / clamp
    hi = expected_elapsed * clamp
    timespan = min(max(actual_elapsed, lo), hi)
    return old * expected_elapsed / timespan


@dataclass(frozen=True)
class MinerSpec:
    node: int
    hash_rate: float
    enabled: bool = True


@dataclass(frozen=True)
class Fixed:
    difficulty: float


@dataclass(frozen=True)
class Auto:
    target_block_time: float


@dataclass(frozen=True)
class Retarget:
    initial: float
    target_block_time: float = 600.0
    interval: int = 2016
    clamp: float = 4.0


DifficultyMode = Union[Fixed, Auto, Retarget]


def initial_difficulty(mode: DifficultyMode, hash_rates: Sequence[float]) -> float:
    if isinstance(mode, Fixed):
        return mode.difficulty
    if isinstance(mode, Auto):
        return auto_difficulty(mode.target_block_time, hash_rates)
    return mode.initial


def grind(target: Union[CompactTarget, int], header_seed: bytes, max_iters: int) -> tuple[bool, int]:
    """Double SHA-256 ``header_seed || nonce`` until the digest is <= target.

    The nonce is an 8-byte little-endian counter starting at 0; the digest is
    read as a big-endian integer.  Returns ``(success, iterations used)``.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    expanded = target.expanded if isinstance(target, CompactTarget) else target
    return kernels.grind(bytes(header_seed), expanded, max_iters)
