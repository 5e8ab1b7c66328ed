"""Timing harness for the masking kernels.

Times the three kernels as operations: feature masking (resize + broadcast
multiply), input-mask application (same-size broadcast multiply), and hybrid
masking (the zero-fill selection pass over precomputed FM/IM features). The
hm/fm time ratio quantifies the overhead of hybridization.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .masking import MaskMode, MaskedFeatures, feature_mask, hybrid_mask
from .tensor import BinaryMask, Tensor, broadcast_mask, hadamard, resize_bilinear

_MODES = ("fm", "im", "hm")


@dataclass(frozen=True)
class BenchRow:
    size: tuple[int, int, int]
    mode: str
    ns_per_op: float
    gb_per_s: float
    hm_fm_ratio: float

    @property
    def size_label(self) -> str:
        c, h, w = self.size
        return f"{c}x{h}x{w}"


def _median_ns(fn, reps: int) -> float:
    fn()  # warm up (JIT, allocator)
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - t0)
    return float(np.median(samples))


def _bytes_moved(mode: str, c: int, h: int, w: int) -> int:
    n = c * h * w
    if mode == "fm":  # read features + resized mask, write output
        return 4 * (2 * n + h * w)
    if mode == "im":  # read features + broadcast mask, write output
        return 4 * 3 * n
    return 4 * 3 * n  # hm: read fm + im, write output


def run_bench(
    sizes: list[tuple[int, int, int]], reps: int = 9, zero_tol: float = 0.0, seed: int = 0
) -> list[BenchRow]:
    """Median kernel timings over the size grid, one row per (size, mode)."""
    if reps < 1 or not sizes:
        raise ValueError("need at least one size and one rep")
    rows = []
    rng = np.random.Generator(np.random.PCG64(seed))
    for c, h, w in sizes:
        feat = Tensor(rng.standard_normal((c, h, w)).astype(np.float32))
        mask = BinaryMask((rng.random((2 * h, 2 * w)) < 0.4).astype(np.uint8))
        maskb = broadcast_mask(resize_bilinear(mask, h, w), c)
        fm = feature_mask(feat, mask)
        im = MaskedFeatures(hadamard(feat, maskb), MaskMode.IM)

        timings = {
            "fm": _median_ns(lambda: feature_mask(feat, mask), reps),
            "im": _median_ns(lambda: hadamard(feat, maskb), reps),
            "hm": _median_ns(lambda: hybrid_mask(fm, im, zero_tol), reps),
        }
        ratio = timings["hm"] / timings["fm"]
        for mode in _MODES:
            ns = timings[mode]
            rows.append(
                BenchRow(
                    size=(c, h, w),
                    mode=mode,
                    ns_per_op=ns,
                    gb_per_s=_bytes_moved(mode, c, h, w) / ns,
                    hm_fm_ratio=ratio,
                )
            )
    return rows


def write_csv(rows: list[BenchRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["size", "mode", "ns_per_op", "gb_per_s", "hm_fm_ratio"])
        for row in rows:
            writer.writerow(
                [row.size_label, row.mode, f"{row.ns_per_op:.0f}", f"{row.gb_per_s:.3f}", f"{row.hm_fm_ratio:.3f}"]
            )
