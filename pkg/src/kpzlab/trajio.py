"""Binary trajectory snapshots.

Layout (little-endian): magic ``KPZTRAJ1``, uint32 N, float64 T, uint64 seed,
uint32 frame count; then per frame: float64 time, ceil(N/8) bytes of packed
spins (bit set = spin +1, LSB-first within each byte), int64 flux counter.
"""

from __future__ import annotations

import struct

import numpy as np

from .dynamics import TrajectoryRecord

MAGIC = b"KPZTRAJ1"

__all__ = ["write_trajectory", "read_trajectory"]


def write_trajectory(path, record: TrajectoryRecord, seed: int) -> None:
    n = record.snapshots.shape[1]
    horizon = float(record.times[-1])
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IdQI", n, horizon, seed & (2**64 - 1), len(record.times)))
        for i, t in enumerate(record.times):
            fh.write(struct.pack("<d", float(t)))
            bits = (record.snapshots[i] > 0).astype(np.uint8)
            fh.write(np.packbits(bits, bitorder="little").tobytes())
            fh.write(struct.pack("<q", int(record.flux[i])))


def read_trajectory(path) -> dict:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError("not a trajectory file")
        n, horizon, seed, n_frames = struct.unpack("<IdQI", fh.read(24))
        n_bytes = -(-n // 8)
        times = np.zeros(n_frames)
        spins = np.zeros((n_frames, n), dtype=np.int8)
        flux = np.zeros(n_frames, dtype=np.int64)
        for i in range(n_frames):
            (times[i],) = struct.unpack("<d", fh.read(8))
            bits = np.unpackbits(np.frombuffer(fh.read(n_bytes), dtype=np.uint8), bitorder="little")[:n]
            spins[i] = 2 * bits.astype(np.int8) - 1
            (flux[i],) = struct.unpack("<q", fh.read(8))
    return {"N": n, "T": horizon, "seed": seed, "times": times, "spins": spins, "flux": flux}
