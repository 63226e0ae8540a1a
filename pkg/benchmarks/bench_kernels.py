"""Compare the compiled geometry kernels against the NumPy fallback.

Runs each kernel on identical inputs through both implementations and
prints a small table. The compiled core is skipped (with a note) when the
extension is not importable in this environment.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from propkit._kernels import _fallback

try:
    from propkit._kernels import _compiled
except ImportError:
    _compiled = None


def _boxes(rng: np.random.Generator, count: int, span: float = 800.0) -> np.ndarray:
    x0 = rng.uniform(0, span, count)
    y0 = rng.uniform(0, span, count)
    w = rng.uniform(8, 120, count)
    h = rng.uniform(8, 120, count)
    return np.stack([x0, y0, x0 + w, y0 + h], axis=1)


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5, help="timing repeats (best of)")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    a500 = _boxes(rng, 500)
    b500 = _boxes(rng, 500)
    a2000 = _boxes(rng, 2000)
    order = np.argsort(-rng.random(2000)).astype(np.int64)
    integral = np.cumsum(
        np.cumsum(rng.random((513, 513)), axis=0), axis=1
    )
    windows = _boxes(rng, 5000, span=420.0).astype(np.int64)
    windows[:, 2:] = np.clip(windows[:, 2:], None, 512)

    cases = [
        ("cross_iou 500x500", lambda impl: impl.cross_iou(a500, b500)),
        ("nms_keep 2000 @0.5", lambda impl: impl.nms_keep(a2000, order, 0.5)),
        (
            "window_edge_scores 5000",
            lambda impl: impl.window_edge_scores(integral, windows, 2),
        ),
    ]

    print(f"{'kernel':<26} {'fallback':>10} {'compiled':>10} {'speedup':>8}")
    for name, call in cases:
        base = _time(lambda: call(_fallback), args.repeat)
        if _compiled is None:
            print(f"{name:<26} {base * 1e3:>8.2f}ms {'n/a':>10} {'n/a':>8}")
            continue
        fast = _time(lambda: call(_compiled), args.repeat)
        np.testing.assert_allclose(call(_fallback), call(_compiled), atol=1e-9)
        print(
            f"{name:<26} {base * 1e3:>8.2f}ms {fast * 1e3:>8.2f}ms "
            f"{base / fast:>7.1f}x"
        )
    if _compiled is None:
        print("\ncompiled extension not importable; fallback timings only")


if __name__ == "__main__":
    main()
