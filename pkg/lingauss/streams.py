"""Stable, label-addressed random streams.

A master seed splits into independent streams by labels, e.g.

    root = SeedTree(seed)

    root.spawn('nestings').spawn(3).generator()   # chain of nesting 3
    root.spawn('run', 0).generator()              # first repeated run

Streams are addressed by label path, not by spawn order, so adding stages
or repeats never perturbs existing streams.

Normal deviates are drawn by numpy's PCG64 Generator (ziggurat method).

"""
import zlib

import numpy as np


def _label_key(label):
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f'stream label must be non-negative not {label}')
        return int(label)

    # stable across processes (unlike hash())
    return zlib.crc32(str(label).encode('utf-8'))


class SeedTree:
    """A node of the stream tree rooted at a 64-bit master seed."""

    __slots__ = ('seed', 'path')

    def __init__(self, seed, path=()):
        seed = int(seed)

        if not 0 <= seed < 2 ** 64:
            raise ValueError(f'seed must be a 64-bit unsigned integer not {seed}')

        self.seed = seed
        self.path = tuple(path)

    def __repr__(self):
        return f'{self.__class__.__name__}({self.seed}, path={self.path!r})'

    def __eq__(self, other):
        if not isinstance(other, SeedTree):
            return NotImplemented

        return (self.seed, self.path) == (other.seed, other.path)

    def __hash__(self):
        return hash((self.seed, self.path))

    def spawn(self, *labels):
        """Child node addressed by the given labels."""
        return self.__class__(self.seed, self.path + labels)

    @property
    def sequence(self):
        return np.random.SeedSequence(self.seed,
                                      spawn_key=tuple(_label_key(label) for label in self.path))

    def generator(self):
        """Fresh numpy Generator for this node's stream."""
        return np.random.Generator(np.random.PCG64(self.sequence))
