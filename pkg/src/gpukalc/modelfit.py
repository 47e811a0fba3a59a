"""Measurement post-processing: fit the empirical models from CSV series,
compute instruction latency from raw timing, detect peakwarps, and emit
microbenchmark CUDA sources for users with hardware.

Fitters are deterministic: the piecewise search is exact dynamic programming
over observed x positions, and the exponential fit multi-starts a damped
Gauss-Newton from a fixed candidate grid.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from gpukalc.errors import FitError
from gpukalc.profiles import ExpGrowthModel, LinearOverheadModel, PiecewiseLinearModel


@dataclass(frozen=True)
class MeasurementSeries:
    """Ordered (x, y) pairs with strictly increasing x."""

    x: tuple[float, ...]
    y: tuple[float, ...]

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise FitError("x and y lengths differ")
        if any(b <= a for a, b in zip(self.x, self.x[1:])):
            raise FitError("x values must be strictly increasing")

    def __len__(self) -> int:
        return len(self.x)

    @classmethod
    def from_csv(cls, text: str) -> "MeasurementSeries":
        rows = [ln.strip() for ln in io.StringIO(text) if ln.strip()]
        if not rows or rows[0].lower().replace(" ", "") != "x,y":
            raise FitError("measurement CSV must start with an 'x,y' header")
        xs, ys = [], []
        for ln in rows[1:]:
            a, _, b = ln.partition(",")
            xs.append(float(a))
            ys.append(float(b))
        return cls(tuple(xs), tuple(ys))


@dataclass(frozen=True)
class LinearFit:
    model: LinearOverheadModel
    r2: float
    rmse: float


@dataclass(frozen=True)
class PiecewiseFit:
    model: PiecewiseLinearModel
    r2: float
    rmse: float


@dataclass(frozen=True)
class ExpFit:
    a: float
    b: float
    c: float
    r2: float
    rmse: float
    converged: bool

    def to_model(self) -> ExpGrowthModel:
        return ExpGrowthModel(self.a, self.b, self.c)


def _r2_rmse(y: np.ndarray, pred: np.ndarray) -> tuple[float, float]:
    rss = float(np.sum((y - pred) ** 2))
    tss = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else (1.0 if rss == 0 else 0.0)
    return r2, math.sqrt(rss / len(y))


def fit_linear(s: MeasurementSeries) -> LinearFit:
    """Ordinary least squares line through the series."""
    if len(s) < 2:
        raise FitError("linear fit needs at least 2 points")
    x = np.asarray(s.x, dtype=float)
    y = np.asarray(s.y, dtype=float)
    if np.ptp(x) == 0:
        raise FitError("degenerate series: all x equal")
    slope, intercept = np.polyfit(x, y, 1)
    # polyfit can return -0.0 slopes on constant data; normalize.
    slope = float(slope) + 0.0
    model = LinearOverheadModel(slope=slope, intercept=max(float(intercept), 0.0))
    r2, rmse = _r2_rmse(y, slope * x + float(intercept))
    return LinearFit(model=model, r2=r2, rmse=rmse)


def _segment_cost_tables(x: np.ndarray, y: np.ndarray):
    """Prefix sums so any [i, j] segment's OLS cost evaluates in O(1)."""
    z = np.zeros(1)
    sx = np.concatenate([z, np.cumsum(x)])
    sxx = np.concatenate([z, np.cumsum(x * x)])
    sy = np.concatenate([z, np.cumsum(y)])
    sxy = np.concatenate([z, np.cumsum(x * y)])
    syy = np.concatenate([z, np.cumsum(y * y)])

    def cost(i: int, j: int) -> tuple[float, float, float]:
        n = j - i + 1
        Sx = sx[j + 1] - sx[i]
        Sxx = sxx[j + 1] - sxx[i]
        Sy = sy[j + 1] - sy[i]
        Sxy = sxy[j + 1] - sxy[i]
        Syy = syy[j + 1] - syy[i]
        denom = n * Sxx - Sx * Sx
        slope = (n * Sxy - Sx * Sy) / denom
        intercept = (Sy - slope * Sx) / n
        rss = max(Syy - intercept * Sy - slope * Sxy, 0.0)
        return rss, slope, intercept

    return cost


def fit_piecewise_linear(s: MeasurementSeries, n_segments: int) -> PiecewiseFit:
    """Optimal n-segment OLS segmentation by dynamic programming.

    Segment boundaries sit exactly at observed x positions; each interval is
    [lo, hi) and the last one extends to infinity. Every segment must hold
    at least two points.
    """
    if n_segments < 1:
        raise FitError("n_segments must be >= 1")
    n = len(s)
    if n < 2 * n_segments:
        raise FitError(
            f"{n_segments} segments need at least {2 * n_segments} points, got {n}"
        )
    x = np.asarray(s.x, dtype=float)
    y = np.asarray(s.y, dtype=float)
    cost = _segment_cost_tables(x, y)

    INF = float("inf")
    # best[k][j]: min RSS covering points 0..j with k+1 segments.
    best = [[INF] * n for _ in range(n_segments)]
    split = [[-1] * n for _ in range(n_segments)]
    for j in range(1, n):
        best[0][j] = cost(0, j)[0]
    for k in range(1, n_segments):
        for j in range(2 * (k + 1) - 1, n):
            for i in range(2 * k, j):  # segment k covers i..j, needs j-i+1 >= 2
                prev = best[k - 1][i - 1]
                if prev == INF:
                    continue
                c = prev + cost(i, j)[0]
                if c < best[k][j]:
                    best[k][j] = c
                    split[k][j] = i
    if best[n_segments - 1][n - 1] == INF:
        raise FitError("no feasible segmentation")

    starts = []
    j = n - 1
    for k in range(n_segments - 1, 0, -1):
        i = split[k][j]
        starts.append(i)
        j = i - 1
    starts.reverse()
    bounds = [0] + starts + [n]
    segments = []
    for a, b in zip(bounds, bounds[1:]):
        _, slope, intercept = cost(a, b - 1)
        segments.append((float(slope), float(intercept)))
    breakpoints = tuple(float(x[i]) for i in starts)
    model = PiecewiseLinearModel(breakpoints=breakpoints, segments=tuple(segments))
    pred = np.asarray([model.evaluate(v) for v in x])
    r2, rmse = _r2_rmse(y, pred)
    return PiecewiseFit(model=model, r2=r2, rmse=rmse)


def fit_exponential(s: MeasurementSeries, max_iter: int = 200) -> ExpFit:
    """Fit y = a*(b - exp(-c*x)) by damped Gauss-Newton with multi-start on c.

    For each candidate c the inner (a, b) problem is linear and solved
    exactly; the best start is then polished on all three parameters.
    Non-convergence (or an invalid a <= 0 / c <= 0 optimum, as happens on
    decreasing data) returns the best-so-far parameters flagged.
    """
    if len(s) < 4:
        raise FitError("exponential fit needs at least 4 points")
    if any(v <= 0 for v in s.y):
        raise FitError("exponential fit needs positive y values")
    x = np.asarray(s.x, dtype=float)
    y = np.asarray(s.y, dtype=float)

    def rss_of(a: float, b: float, c: float) -> float:
        return float(np.sum((y - a * (b - np.exp(-c * x))) ** 2))

    # Candidate decay rates: a fixed grid around 1/x_max plus a two-point
    # log estimate from the documented initialization (a ~ max y, b ~ 1.05).
    base = 1.0 / max(x.max(), 1e-12)
    cands = [base * f for f in (0.01, 0.03, 0.1, 0.3, 1, 3, 10, 30, 100, 300, 1000)]
    a0, b0 = float(y.max()), 1.05
    inner = b0 - y[0] / a0
    if 0 < inner < 1 and x[0] > 0:
        cands.append(-math.log(inner) / x[0])

    best = None  # (rss, a, b, c)
    for c in cands:
        e = np.exp(-c * x)
        design = np.column_stack([np.ones_like(x), e])
        sol, *_ = np.linalg.lstsq(design, y, rcond=None)
        A, B = float(sol[0]), float(sol[1])
        a = -B
        if a == 0:
            continue
        b = A / a
        r = rss_of(a, b, c)
        if best is None or r < best[0]:
            best = (r, a, b, c)
    if best is None:
        return ExpFit(a0, b0, base, 0.0, math.inf, False)

    rss, a, b, c = best
    lam = 1e-3
    converged = False
    for _ in range(max_iter):
        e = np.exp(-c * x)
        jac = np.column_stack([b - e, np.full_like(x, a), a * x * e])
        r = y - a * (b - e)
        g = jac.T @ r
        h = jac.T @ jac
        accepted = False
        for _ in range(30):
            try:
                step = np.linalg.solve(h + lam * np.eye(3), g)
            except np.linalg.LinAlgError:
                lam *= 3
                continue
            na, nb, nc = a + step[0], b + step[1], c + step[2]
            nr = rss_of(na, nb, nc)
            if nr < rss:
                improvement = rss - nr
                a, b, c, rss = na, nb, nc, nr
                lam = max(lam / 3, 1e-12)
                accepted = True
                if improvement <= 1e-14 * max(rss, 1e-300):
                    converged = True
                break
            lam *= 3
        if not accepted:
            converged = True
            break
        if converged:
            break

    pred = a * (b - np.exp(-c * x))
    r2, rmse = _r2_rmse(y, pred)
    ok = converged and a > 0 and c > 0
    return ExpFit(float(a), float(b), float(c), r2, rmse, ok)


def avg_latency_from_timing(T_tot: float, N: int) -> float:
    """Average latency of one instruction from a 2x256-deep timed chain."""
    if N < 1:
        raise FitError("repetition count must be >= 1")
    if T_tot < 0:
        raise FitError("total time must be >= 0")
    return T_tot / (2 * 256 * N)


def detect_peakwarps(d: MeasurementSeries, epsilon: float | None = None) -> int:
    """Smallest warp count whose throughput is within epsilon of the maximum.

    Default epsilon is 2% of the series maximum.
    """
    if len(d) == 0:
        raise FitError("empty series")
    peak = max(d.y)
    if epsilon is None:
        epsilon = 0.02 * peak
    if epsilon <= 0:
        raise FitError("epsilon must be > 0")
    for w, tput in zip(d.x, d.y):
        if tput >= peak - epsilon:
            return int(w)
    raise AssertionError("unreachable: the maximum is always within epsilon")


_REPEAT_MACROS = """\
#define REPEAT2(S) S S
#define REPEAT4(S) REPEAT2(S) REPEAT2(S)
#define REPEAT8(S) REPEAT4(S) REPEAT4(S)
#define REPEAT16(S) REPEAT8(S) REPEAT8(S)
#define REPEAT32(S) REPEAT16(S) REPEAT16(S)
#define REPEAT64(S) REPEAT32(S) REPEAT32(S)
#define REPEAT128(S) REPEAT64(S) REPEAT64(S)
#define repeat256(S) REPEAT128(S) REPEAT128(S)
"""

_ILP_BODIES = {
    1: "b += a; a += b;",
    2: "b += a; a += b; c += d; d += c;",
    3: "b += a; a += b; c += d; d += c; e += f; f += e;",
}

MICROBENCH_KINDS = (
    "compute_throughput",
    "latency",
    "pointer_chase_global",
    "pointer_chase_shared",
    "empty_launch",
)


def generate_microbench(kind: str, ilp: int = 1) -> str:
    """Emit compilable CUDA C++ for one measurement kernel.

    Output is deterministic for fixed inputs. Results are always stored to a
    dummy location so -O0 compilation cannot drop the measured work.
    """
    if kind == "compute_throughput":
        if ilp not in _ILP_BODIES:
            raise ValueError(f"ilp must be one of {sorted(_ILP_BODIES)}, got {ilp}")
        body = _ILP_BODIES[ilp]
        decls = "int a = threadIdx.x, b = 1, c = 2, d = 3, e = 4, f = 5;"
        result = {1: "b + a", 2: "b + a + c + d", 3: "b + a + c + d + e + f"}[ilp]
        return f"""\
// Compute-instruction throughput kernel, ILP={ilp}.
// Launch with 256 threads per block per SM and sweep the number of active
// warps; record elapsed time with cudaEvent timers around the launch and
// convert to instructions per cycle with the GPU clock.
{_REPEAT_MACROS}
#ifndef INNER_LOOP_ITER
#define INNER_LOOP_ITER 1024
#endif

__global__ void throughput_kernel(int *dummy) {{
    {decls}
    int j = blockIdx.x * blockDim.x + threadIdx.x + blockDim.x * threadIdx.y;
    for (int i = 0; i < INNER_LOOP_ITER; i++) {{
        repeat256({body});
    }}
    dummy[j] = {result}; // store results to avoid compiler optimization
}}
"""
    if kind == "latency":
        return f"""\
// Compute-instruction latency kernel: one thread, one block, a dependent
// chain of 2x256 operations repeated N times. Average latency is
// T_tot / (2 * 256 * N).
{_REPEAT_MACROS}
#ifndef N_REPS
#define N_REPS 64
#endif

__global__ void latency_kernel(long long *t_tot, int *dummy) {{
    int a = threadIdx.x + 1, b = 1;
    long long total = 0;
    for (int n = 0; n < N_REPS; n++) {{
        long long start = clock64();
        repeat256(b += a; a += b;);
        long long stop = clock64();
        total += stop - start;
    }}
    *t_tot = total;
    *dummy = a + b; // store results to avoid compiler optimization
}}
"""
    if kind == "pointer_chase_global":
        return f"""\
// Global-memory latency by pointer chasing. The host initializes the array
// so each load's address depends on the previous load's value.
{_REPEAT_MACROS}
#include <cuda_runtime.h>

#ifndef INNER_LOOP_ITER
#define INNER_LOOP_ITER 16
#endif

__global__ void gm_latency_kernel(unsigned int *d_arr, unsigned int *dummyVal,
                                  long long *cycleCountDuration) {{
    unsigned int x = 0;
    long long clockCycleSum = 0;
    for (int i = 0; i < INNER_LOOP_ITER; i++) {{
        long long startClock = clock64();
        repeat256(x = d_arr[x];);
        long long stopClock = clock64();
        clockCycleSum += stopClock - startClock;
    }}
    int j = blockIdx.x * blockDim.x * blockDim.y
            + threadIdx.x + blockDim.x * threadIdx.y;
    cycleCountDuration[j] = clockCycleSum;
    /* dummyVal store so the compiler cannot optimise the chase away,
       since x is not otherwise reused */
    *dummyVal = x;
}}

void init_chase_array(unsigned int *h_arr, unsigned int N, unsigned int stride) {{
    for (unsigned int k = 0; k < N; k++) {{
        h_arr[k] = (k + stride) % N;
    }}
}}
"""
    if kind == "pointer_chase_shared":
        return f"""\
// Shared-memory latency by pointer chasing over an on-chip array.
{_REPEAT_MACROS}
#ifndef SH_N
#define SH_N 1024
#endif
#ifndef INNER_LOOP_ITER
#define INNER_LOOP_ITER 16
#endif

__global__ void sm_latency_kernel(const unsigned int *d_arr,
                                  unsigned int *dummyVal,
                                  long long *cycleCountDuration) {{
    __shared__ unsigned int shdata[SH_N];
    for (int i = 0; i < SH_N; i++) {{
        shdata[i] = d_arr[i];
    }}
    __syncthreads();
    unsigned int x = 0;
    long long clockCycleSum = 0;
    for (int i = 0; i < INNER_LOOP_ITER; i++) {{
        long long startClock = clock64();
        repeat256(x = shdata[x];);
        long long stopClock = clock64();
        clockCycleSum += stopClock - startClock;
    }}
    cycleCountDuration[threadIdx.x] = clockCycleSum;
    /* dummyVal store so the compiler cannot optimise the chase away */
    *dummyVal = x;
}}
"""
    if kind == "empty_launch":
        return """\
// Launch-overhead kernel: no instructions. Sweep blocksPerGrid and
// threadsPerBlock, time each launch on the host, and fit elapsed
// microseconds against blocks * threads-per-block.
__global__ void emptyKernel()
{
    // No instructions are executed
}

// emptyKernel<<<blocksPerGrid, threadsPerBlock>>>();
"""
    raise ValueError(
        f"unknown microbenchmark kind '{kind}'; choose from {', '.join(MICROBENCH_KINDS)}"
    )
