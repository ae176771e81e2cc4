"""Interpreted implementations of the hot kernels.

Used when the compiled ``_speedups`` extension is unavailable or disabled;
results are identical to the compiled versions.
"""
import hashlib


def grind(header_seed: bytes, target: int, max_iters: int) -> tuple[bool, int]:
    sha256 = hashlib.sha256
    prefix = sha256(header_seed)
    for i in range(max_iters):
        h = prefix.copy()
        h.update(i.to_bytes(8, "little"))
        digest = sha256(h.digest()).digest()
        if int.from_bytes(digest, "big") <= target:
            return True, i + 1
    return False, max_iters


def count_hits(header_seed: bytes, target: int, start: int, count: int) -> int:
    """Number of nonces in ``[start, start + count)`` whose digest is <= target."""
    sha256 = hashlib.sha256
    prefix = sha256(header_seed)
    hits = 0
    for i in range(start, start + count):
        h = prefix.copy()
        h.update(i.to_bytes(8, "little"))
        if int.from_bytes(sha256(h.digest()).digest(), "big") <= target:
            hits += 1
    return hits
