"""Seeded streams and chunked ensemble reduction.

Stream scheme: an experiment holds one root ``SeedSequence``. Chunk ``c`` of
an ensemble draws from ``Philox(SeedSequence(root.entropy,
spawn_key=root.spawn_key + (c,)))``. Chunks have a fixed size that depends
only on the ensemble size and path length, never on the number of workers,
and partial results are reduced in chunk order. Results are therefore
bit-identical for any worker count.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import zlib

import numpy as np

N_BATCHES = 32


def as_seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required")
    return np.random.SeedSequence(int(seed))


def substream(seed, *key):
    """Child SeedSequence addressed by ``key`` (ints or strings)."""
    ss = as_seed_sequence(seed)
    ints = tuple(k if isinstance(k, int) else zlib.crc32(str(k).encode()) for k in key)
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + ints)


def generator(seed, *key):
    return np.random.Generator(np.random.Philox(substream(seed, *key)))


def chunk_size_for(length, target=1 << 21, lo=16, hi=8192):
    """Samples per chunk so that one chunk holds about ``target`` path points."""
    size = target // max(1, int(length))
    return int(min(hi, max(lo, size)))


def chunks(count, size):
    return [(start, min(size, count - start)) for start in range(0, count, size)]


def map_chunks(fn, count, seed, *, chunk_size, workers=1):
    """Run ``fn(rng, start, size)`` over fixed chunks; results in chunk order."""
    layout = chunks(count, chunk_size)

    def job(item):
        c, (start, size) = item
        return fn(generator(seed, c), start, size)

    items = list(enumerate(layout))
    if workers is None or workers <= 1 or len(items) == 1:
        return [job(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, items))


@dataclass
class BatchSums:
    """Per-batch sums of per-sample quantities (columns)."""

    sums: np.ndarray
    counts: np.ndarray

    @property
    def n(self):
        return int(self.counts.sum())

    def mean(self):
        return self.sums.sum(axis=0) / self.n

    def batch_means(self):
        return self.sums / self.counts[:, None]


def batch_index(start, size, count, n_batches=N_BATCHES):
    idx = np.arange(start, start + size, dtype=np.int64)
    return (idx * n_batches) // count


def ensemble_sums(fn, count, seed, *, chunk_size, workers=1, n_batches=N_BATCHES):
    """Batch sums of ``fn(rng, size) -> (size, m)`` over ``count`` samples."""
    n_batches = min(n_batches, count)

    def chunk(rng, start, size):
        vals = np.asarray(fn(rng, size))
        if vals.ndim == 1:
            vals = vals[:, None]
        b = batch_index(start, size, count, n_batches)
        out = np.zeros((n_batches, vals.shape[1]), dtype=vals.dtype)
        # batch ids are nondecreasing inside a chunk
        starts = np.flatnonzero(np.r_[True, b[1:] != b[:-1]])
        out[b[starts]] += np.add.reduceat(vals, starts, axis=0)
        return out, np.bincount(b, minlength=n_batches)

    parts = map_chunks(chunk, count, seed, chunk_size=chunk_size, workers=workers)
    sums = parts[0][0].copy()
    counts = parts[0][1].copy()
    for s, c in parts[1:]:
        sums += s
        counts += c
    return BatchSums(sums, counts)


def ensemble_collect(fn, count, seed, *, chunk_size, workers=1):
    """Concatenate ``fn(rng, size)`` outputs over all chunks."""
    parts = map_chunks(lambda rng, start, size: fn(rng, size), count, seed,
                       chunk_size=chunk_size, workers=workers)
    return np.concatenate(parts, axis=0)


def batch_standard_error(batch_values):
    """Standard error from batch estimates; complex input takes the larger component error."""
    v = np.asarray(batch_values)
    nb = v.shape[0]
    if nb < 2:
        return np.full(v.shape[1:], np.nan)
    if np.iscomplexobj(v):
        re = v.real.std(axis=0, ddof=1)
        im = v.imag.std(axis=0, ddof=1)
        return np.maximum(re, im) / np.sqrt(nb)
    return v.std(axis=0, ddof=1) / np.sqrt(nb)
