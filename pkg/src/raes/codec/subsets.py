"""Lexicographic rank/unrank of k-subsets of {0, ..., n-1}."""

from __future__ import annotations

from collections.abc import Iterable
from math import comb

from ..errors import DecodeError, InvalidParameter


def subset_rank(n: int, subset: Iterable[int]) -> int:
    """Position of ``subset`` among all same-size subsets of ``range(n)`` in lex order.

    >>> subset_rank(4, [0, 2])
    1
    """
    items = list(subset)
    k = len(items)
    rank = 0
    prev = -1
    for i, x in enumerate(items):
        if not prev < x < n:
            raise InvalidParameter(f"subset must be strictly increasing within range({n}): {items}")
        # subsets that agree so far but place a smaller element at position i
        rank += comb(n - prev - 1, k - i) - comb(n - x, k - i)
        prev = x
    return rank


def subset_unrank(n: int, k: int, rank: int) -> list[int]:
    if not 0 <= k <= n:
        raise InvalidParameter(f"subset size {k} outside 0..{n}")
    if not 0 <= rank < comb(n, k):
        raise DecodeError(f"rank {rank} out of range for C({n}, {k})")
    out: list[int] = []
    x = 0
    for i in range(k):
        while True:
            block = comb(n - x - 1, k - i - 1)
            if rank < block:
                break
            rank -= block
            x += 1
        out.append(x)
        x += 1
    return out
