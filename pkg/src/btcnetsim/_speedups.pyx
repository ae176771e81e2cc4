# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled hot kernels; must return exactly what ``_purepy`` returns."""
from libc.stdint cimport uint64_t
from libc.string cimport memcmp, memcpy

cdef extern from "openssl/sha.h" nogil:
    ctypedef struct SHA256_CTX:
        pass
    int SHA256_Init(SHA256_CTX *c)
    int SHA256_Update(SHA256_CTX *c, const void *data, size_t n)
    int SHA256_Final(unsigned char *md, SHA256_CTX *c)
    unsigned char *SHA256(const unsigned char *d, size_t n, unsigned char *md)

_UINT256_MAX = (1 << 256) - 1


cdef inline bint _hit(const SHA256_CTX *prefix, uint64_t nonce, const unsigned char *target) noexcept nogil:
    cdef SHA256_CTX ctx
    cdef unsigned char nb[8]
    cdef unsigned char first[32]
    cdef unsigned char second[32]
    cdef int i
    for i in range(8):
        nb[i] = (nonce >> (8 * i)) & 0xFF
    memcpy(&ctx, prefix, sizeof(SHA256_CTX))
    SHA256_Update(&ctx, nb, 8)
    SHA256_Final(first, &ctx)
    SHA256(first, 32, second)
    return memcmp(second, target, 32) <= 0


cdef bytes _target_bytes(target):
    if target > _UINT256_MAX:
        target = _UINT256_MAX
    return int(target).to_bytes(32, "big")


def grind(bytes header_seed, target, Py_ssize_t max_iters):
    if target < 0:
        return False, max_iters
    cdef bytes tb = _target_bytes(target)
    cdef const unsigned char *t = tb
    cdef const unsigned char *seed = header_seed
    cdef Py_ssize_t n = len(header_seed)
    cdef SHA256_CTX prefix
    cdef Py_ssize_t i
    cdef Py_ssize_t found = -1
    with nogil:
        SHA256_Init(&prefix)
        SHA256_Update(&prefix, seed, n)
        for i in range(max_iters):
            if _hit(&prefix, <uint64_t>i, t):
                found = i
                break
    if found >= 0:
        return True, found + 1
    return False, max_iters


def count_hits(bytes header_seed, target, Py_ssize_t start, Py_ssize_t count):
    if target < 0:
        return 0
    cdef bytes tb = _target_bytes(target)
    cdef const unsigned char *t = tb
    cdef const unsigned char *seed = header_seed
    cdef Py_ssize_t n = len(header_seed)
    cdef SHA256_CTX prefix
    cdef Py_ssize_t i
    cdef Py_ssize_t hits = 0
    with nogil:
        SHA256_Init(&prefix)
        SHA256_Update(&prefix, seed, n)
        for i in range(start, start + count):
            if _hit(&prefix, <uint64_t>i, t):
                hits += 1
    return hits
