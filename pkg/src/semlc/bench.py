"""Timing comparison of the two equilibrium routes on layer-shaped inputs.

The dense route multiplies every unfolded feature tensor by the
materialized f x f operator Q; the FFT route deconvolves along the channel
axis per call. Q is built once per profile and reused across calls, which
matches training (the profile changes at most once per optimizer step but
is applied to every batch), so its one-off construction cost is reported
separately and excluded from per-call timing. Outputs of the two routes
are checked against each other before any timing starts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import PathMismatch
from .layers import _fold, _unfold
from .operators import (
    apply_equilibrium_dense,
    apply_equilibrium_fft,
    apply_equilibrium_fft_adjoint,
    build_circulant,
    equilibrium_backward,
)
from .profiles import ProfileParams, RICKER, discretize

MATCH_TOLERANCE = 1e-8


@dataclass(frozen=True)
class BenchConfig:
    shapes: tuple[tuple[int, int, int, int], ...] = ((64, 64, 32, 32),)
    repetitions: int = 25
    warmup: int = 5
    include_backward: bool = True
    sigma: float = 3.0
    delta: float = 0.2

    def __post_init__(self):
        if self.repetitions < 10:
            raise ValueError(f"repetitions must be >= 10, got {self.repetitions}")
        if self.warmup < 3:
            raise ValueError(f"warmup must be >= 3, got {self.warmup}")
        if not self.shapes:
            raise ValueError("at least one shape is required")


@dataclass
class ShapeResult:
    shape: tuple[int, int, int, int]
    dense_median_ns: float
    dense_iqr_ns: float
    fft_median_ns: float
    fft_iqr_ns: float
    ratio_fft_over_dense: float
    q_build_ns: float


@dataclass
class BenchReport:
    config: BenchConfig
    results: list[ShapeResult] = field(default_factory=list)

    def csv_rows(self) -> list[str]:
        rows = ["shape,path,median_ns,iqr_ns,ratio"]
        for r in self.results:
            shape = "x".join(map(str, r.shape))
            ratio = f"{r.ratio_fft_over_dense:.6g}"
            rows.append(f"{shape},dense,{r.dense_median_ns:.0f},{r.dense_iqr_ns:.0f},{ratio}")
            rows.append(f"{shape},fft,{r.fft_median_ns:.0f},{r.fft_iqr_ns:.0f},{ratio}")
        return rows

    def table(self) -> str:
        header = f"{'shape':>16} {'dense med':>12} {'fft med':>12} {'fft/dense':>10} {'Q build':>10}"
        lines = [header, "-" * len(header)]
        for r in self.results:
            shape = "x".join(map(str, r.shape))
            lines.append(
                f"{shape:>16} {r.dense_median_ns / 1e6:>10.3f}ms {r.fft_median_ns / 1e6:>10.3f}ms "
                f"{r.ratio_fft_over_dense:>10.2f} {r.q_build_ns / 1e6:>8.3f}ms"
            )
        return "\n".join(lines)


def _time_calls(fn, warmup: int, repetitions: int) -> tuple[float, float]:
    for _ in range(warmup):
        fn()
    samples = np.empty(repetitions)
    for i in range(repetitions):
        start = time.perf_counter_ns()
        fn()
        samples[i] = time.perf_counter_ns() - start
    q1, q2, q3 = np.percentile(samples, [25, 50, 75])
    return float(q2), float(q3 - q1)


def run_bench(cfg: BenchConfig, seed: int = 0) -> BenchReport:
    """Median/IQR wall time per path and shape, after a correctness gate.

    Raises PathMismatch (and never times) if the two routes disagree by
    more than MATCH_TOLERANCE max-abs on any shape.
    """
    rng = np.random.default_rng(seed)
    report = BenchReport(cfg)
    for shape in cfg.shapes:
        b, f, h, w = shape
        profile = discretize(ProfileParams(cfg.sigma, cfg.delta, f), RICKER)

        build_start = time.perf_counter_ns()
        op = build_circulant(profile)
        q_build_ns = float(time.perf_counter_ns() - build_start)

        z_hat = rng.standard_normal(shape)
        grad = rng.standard_normal(shape)

        dense_out = apply_equilibrium_dense(op, _unfold(z_hat))
        fft_out = apply_equilibrium_fft(profile, _unfold(z_hat))
        gap = float(np.max(np.abs(dense_out - fft_out)))
        if gap > MATCH_TOLERANCE:
            raise PathMismatch(
                f"dense and FFT outputs differ by {gap:.3g} (> {MATCH_TOLERANCE}) on shape {shape}"
            )

        def dense_call():
            out = _fold(apply_equilibrium_dense(op, _unfold(z_hat)), shape)
            if cfg.include_backward:
                _fold(equilibrium_backward(op, _unfold(grad)), shape)
            return out

        def fft_call():
            out = _fold(apply_equilibrium_fft(profile, _unfold(z_hat)), shape)
            if cfg.include_backward:
                _fold(apply_equilibrium_fft_adjoint(profile, _unfold(grad)), shape)
            return out

        dense_median, dense_iqr = _time_calls(dense_call, cfg.warmup, cfg.repetitions)
        fft_median, fft_iqr = _time_calls(fft_call, cfg.warmup, cfg.repetitions)
        report.results.append(
            ShapeResult(
                shape=shape,
                dense_median_ns=dense_median,
                dense_iqr_ns=dense_iqr,
                fft_median_ns=fft_median,
                fft_iqr_ns=fft_iqr,
                ratio_fft_over_dense=fft_median / dense_median,
                q_build_ns=q_build_ns,
            )
        )
    return report
