"""Labelled random streams derived from one master seed.

Each stream is keyed by ``(seed, purpose, *ids)`` through SHA-256, so adding
a node or a link never perturbs the draws of existing streams.
"""
import hashlib
import random


def derive_seed(seed: int, purpose: str, *ids: int) -> int:
    label = ":".join([str(int(seed)), purpose, *(str(int(i)) for i in ids)])
    return int.from_bytes(hashlib.sha256(label.encode()).digest()[:8], "big")


def stream(seed: int, purpose: str, *ids: int) -> random.Random:
    return random.Random(derive_seed(seed, purpose, *ids))
