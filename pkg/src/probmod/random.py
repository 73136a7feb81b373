"""Seeded, splittable random streams.

Integers come from a Philox counter-based generator; Gaussian draws are
made from those integers with the Box-Muller transform so a seed gives
the same samples on every platform.
"""

from __future__ import annotations

import contextlib
import hashlib
import threading
from typing import List, Optional, Sequence

import numpy as np

from .tensor import Tensor

__all__ = ["RngState", "get_rng", "set_rng", "manual_seed", "using_rng", "randn", "rand"]

_TWO_PI = 2.0 * np.pi


def _tag_key(tag: str) -> int:
    return int.from_bytes(hashlib.sha256(tag.encode()).digest()[:4], "little")


class RngState:
    """Single-owner random stream.

    Args:
        seed: non-negative integer seed.
    """

    def __init__(self, seed: int = 0, *, _seed_seq: Optional[np.random.SeedSequence] = None):
        if _seed_seq is None:
            if int(seed) < 0:
                raise ValueError("seed must be non-negative")
            _seed_seq = np.random.SeedSequence(int(seed))
        self.seed = int(seed)
        self._seed_seq = _seed_seq
        self._gen = np.random.Generator(np.random.Philox(_seed_seq))

    def __repr__(self):
        return f"RngState(seed={self.seed}, spawn_key={self._seed_seq.spawn_key})"

    def uniform(self, shape: Sequence[int] = ()) -> np.ndarray:
        """Uniform draws on [0, 1)."""
        return self._gen.random(tuple(shape))

    def normal(self, shape: Sequence[int] = ()) -> np.ndarray:
        shape = tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        half = (n + 1) // 2
        u1 = 1.0 - self._gen.random(half)  # (0, 1], keeps log finite
        u2 = self._gen.random(half)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(_TWO_PI * u2), r * np.sin(_TWO_PI * u2)])[:n]
        return z.reshape(shape)

    def integers(self, low: int, high: int, shape: Sequence[int] = ()) -> np.ndarray:
        return self._gen.integers(low, high, size=tuple(shape))

    def split(self, n: int) -> List["RngState"]:
        """Independent child streams; advances this stream's spawn counter."""
        return [RngState(self.seed, _seed_seq=s) for s in self._seed_seq.spawn(n)]

    def derive(self, tag: str) -> "RngState":
        """A child stream keyed by ``tag``; does not touch this stream's state."""
        seq = np.random.SeedSequence(
            self._seed_seq.entropy, spawn_key=tuple(self._seed_seq.spawn_key) + (_tag_key(tag),)
        )
        return RngState(self.seed, _seed_seq=seq)

    def get_state(self) -> dict:
        return self._gen.bit_generator.state

    def set_state(self, state: dict) -> None:
        self._gen.bit_generator.state = state


class _RngLocal(threading.local):
    def __init__(self):
        self.rng = RngState(0)


_local = _RngLocal()


def get_rng() -> RngState:
    return _local.rng


def set_rng(rng: RngState) -> None:
    _local.rng = rng


def manual_seed(seed: int) -> RngState:
    rng = RngState(seed)
    set_rng(rng)
    return rng


@contextlib.contextmanager
def using_rng(rng: Optional[RngState]):
    """Make ``rng`` the current stream for this thread inside the block."""
    if rng is None:
        yield get_rng()
        return
    prev = _local.rng
    _local.rng = rng
    try:
        yield rng
    finally:
        _local.rng = prev


def randn(*shape) -> Tensor:
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    return Tensor(get_rng().normal(shape))


def rand(*shape) -> Tensor:
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    return Tensor(get_rng().uniform(shape))
