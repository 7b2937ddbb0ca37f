from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple, TypeVar

import numpy as np

T = TypeVar("T")

DEFAULT_BLOCK_SIZE = 4096
THREADS_ENV = "EBDO_THREADS"


def block_generator(seed: int, block: int) -> np.random.Generator:
    """Counter-based generator for one block of paths, keyed by (seed, block)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(block)])))


def path_blocks(n_paths: int, block_size: int = DEFAULT_BLOCK_SIZE) -> List[Tuple[int, int]]:
    if block_size <= 0:
        raise ValueError(f"block_size 必须为正: {block_size}")
    blocks = []
    for b, start in enumerate(range(0, n_paths, block_size)):
        blocks.append((b, min(block_size, n_paths - start)))
    return blocks


def resolve_threads(threads: Optional[int] = None) -> int:
    if threads is None:
        raw = os.environ.get(THREADS_ENV, "").strip()
        if raw:
            try:
                threads = int(raw)
            except ValueError:
                logging.getLogger("ebdo").warning(f"{THREADS_ENV}={raw!r} 无效，改用 1")
                threads = 1
        else:
            threads = os.cpu_count() or 1
    return max(1, int(threads))


def run_blocks(
    work: Callable[[np.random.Generator, int], T],
    n_paths: int,
    seed: int,
    block_size: int = DEFAULT_BLOCK_SIZE,
    threads: Optional[int] = None,
) -> List[T]:
    """Apply ``work(rng, count)`` to every block; results come back in block order.

    The draws of a block depend only on (seed, block index), so the output is
    the same for any thread count.
    """
    blocks = path_blocks(n_paths, block_size)
    workers = min(resolve_threads(threads), len(blocks)) or 1

    def _one(block: Tuple[int, int]) -> T:
        index, count = block
        return work(block_generator(seed, index), count)

    if workers == 1:
        return [_one(block) for block in blocks]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(_one, blocks))


def standard_normals(rng: np.random.Generator, count: int, dims: int, antithetic: bool = False) -> np.ndarray:
    if not antithetic:
        return rng.standard_normal((count, dims))
    if count % 2:
        raise ValueError(f"antithetic 需要偶数路径数: {count}")
    half = rng.standard_normal((count // 2, dims))
    # rows 2k and 2k+1 form a pair
    out = np.empty((count, dims))
    out[0::2] = half
    out[1::2] = -half
    return out


@dataclass
class MomentAccumulator:
    """Column-wise mean/variance merged block by block (pairwise update).

    Blocks must be added in block order for bitwise reproducible output.
    Constant columns report their value and a standard error of exactly 0.
    """

    width: int
    antithetic: bool = False
    count: int = 0
    mean: np.ndarray | None = None
    m2: np.ndarray | None = None
    low: np.ndarray | None = None
    high: np.ndarray | None = None

    def add(self, block: np.ndarray) -> None:
        data = np.asarray(block, dtype=float).reshape(-1, self.width)
        if self.antithetic:
            data = 0.5 * (data[0::2] + data[1::2])
        k = data.shape[0]
        if k == 0:
            return
        b_mean = data.mean(axis=0)
        b_m2 = ((data - b_mean) ** 2).sum(axis=0)
        b_low, b_high = data.min(axis=0), data.max(axis=0)
        if self.count == 0:
            self.count, self.mean, self.m2 = k, b_mean, b_m2
            self.low, self.high = b_low, b_high
            return
        total = self.count + k
        delta = b_mean - self.mean
        self.mean = self.mean + delta * (k / total)
        self.m2 = self.m2 + b_m2 + delta * delta * (self.count * k / total)
        self.low = np.minimum(self.low, b_low)
        self.high = np.maximum(self.high, b_high)
        self.count = total

    def result(self) -> Tuple[np.ndarray, np.ndarray]:
        if self.count == 0:
            raise ValueError("没有样本")
        constant = self.low == self.high
        mean = np.where(constant, self.low, self.mean)
        if self.count < 2:
            return mean, np.zeros(self.width)
        stderr = np.sqrt(self.m2 / (self.count - 1) / self.count)
        return mean, np.where(constant, 0.0, stderr)
