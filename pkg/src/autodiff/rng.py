"""
Random Stream Module

Explicit, splittable random number streams. Nothing in the project draws
from a global generator; every stochastic operation receives an RngStream.

Streams are counter-based (Philox): a stream is fully described by its
64-bit seed and its counter, so replaying from an equal state reproduces
the draws bit-exactly. Independent child streams are derived by hashing
(seed, *keys) through numpy's SeedSequence.
"""

from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np

ShapeLike = Union[int, Sequence[int]]

_MASK64 = (1 << 64) - 1


class RngStream:
    """A reproducible random stream identified by (seed, counter)."""

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & _MASK64
        self._bit_generator = np.random.Philox(key=self.seed, counter=int(counter))
        self._generator = np.random.Generator(self._bit_generator)

    @property
    def counter(self) -> int:
        """Current Philox counter folded to an integer."""
        words = self._bit_generator.state['state']['counter']
        return sum(int(w) << (64 * i) for i, w in enumerate(words))

    def split(self, *keys: int) -> 'RngStream':
        """
        Derive an independent child stream.

        The child depends only on this stream's seed and the given keys,
        never on how many draws were taken from the parent.

        Args:
            *keys: Non-negative integers identifying the child

        Returns:
            New RngStream
        """
        entropy = [self.seed] + [int(k) for k in keys]
        child_seed = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0]
        return RngStream(int(child_seed))

    def snapshot(self) -> Dict[str, Any]:
        """Capture the complete generator state, buffered words included."""
        state = self._bit_generator.state
        return {
            'seed': self.seed,
            'state': {
                'bit_generator': state['bit_generator'],
                'state': {k: np.array(v, copy=True) for k, v in state['state'].items()},
                'buffer': np.array(state['buffer'], copy=True),
                'buffer_pos': state['buffer_pos'],
                'has_uint32': state['has_uint32'],
                'uinteger': state['uinteger'],
            },
        }

    @classmethod
    def restore(cls, snapshot: Dict[str, Any]) -> 'RngStream':
        """Rebuild a stream from `snapshot()` output."""
        stream = cls(snapshot['seed'])
        stream._bit_generator.state = snapshot['state']
        return stream

    # Draws

    def normal(self, shape: ShapeLike, dtype=np.float64) -> np.ndarray:
        return self._generator.standard_normal(shape, dtype=dtype)

    def uniform(self, low: float = 0.0, high: float = 1.0, size: ShapeLike = None) -> np.ndarray:
        return self._generator.uniform(low, high, size)

    def random(self, shape: ShapeLike, dtype=np.float64) -> np.ndarray:
        return self._generator.random(shape, dtype=dtype)

    def integers(self, low: int, high: int, size: ShapeLike = None) -> np.ndarray:
        return self._generator.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def choice(self, n: int, size: ShapeLike, replace: bool, p: Optional[np.ndarray] = None) -> np.ndarray:
        return self._generator.choice(n, size=size, replace=replace, p=p)

    def state(self) -> Tuple[int, int]:
        return self.seed, self.counter

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, counter={self.counter})"
