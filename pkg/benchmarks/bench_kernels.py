"""Time the numba and numpy paths of the hot kernels side by side.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Kernels: GRU scan forward and backward at the default model width, and one
skip-gram hierarchical-softmax epoch. Compilation happens in a warm-up call
that is not timed.
"""
from __future__ import annotations

import argparse
import json
import platform
import time

import numpy as np

from deptext.embeddings.skipgram import WORD2VEC, train_skipgram
from deptext.model import kernels


def _best_of(fn, repeat: int) -> float:
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_scan(B: int, T: int, H: int, repeat: int) -> dict[str, dict[str, float]]:
    rng = np.random.default_rng(0)
    gx = rng.normal(size=(B, T, 3 * H)).astype(np.float32)
    wh = (rng.normal(size=(H, 3 * H)) * 0.1).astype(np.float32)
    bh = np.zeros(3 * H, np.float32)
    dh = rng.normal(size=(B, T, H)).astype(np.float32)
    out = {}
    for backend in ("numba", "numpy"):
        cache = kernels.scan_forward(gx, wh, bh, backend=backend)
        out[backend] = {
            "forward": _best_of(lambda: kernels.scan_forward(gx, wh, bh, backend=backend), repeat),
            "backward": _best_of(lambda: kernels.scan_backward(dh, cache, wh, backend=backend), repeat),
        }
    return out


def bench_skipgram(n_sentences: int, repeat: int) -> dict[str, float]:
    from dataclasses import replace

    rng = np.random.default_rng(0)
    words = [f"w{i}" for i in range(400)]
    p = 1.0 / np.arange(1, len(words) + 1)
    p /= p.sum()
    sents = [" ".join(rng.choice(words, size=int(rng.integers(4, 12)), p=p)) for _ in range(n_sentences)]
    cfg = replace(WORD2VEC, epochs=1)
    return {b: _best_of(lambda: train_skipgram(sents, cfg, seed=0, backend=b), repeat) for b in ("numba", "numpy")}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--steps", type=int, default=30)
    ap.add_argument("--hidden", type=int, default=128)
    ap.add_argument("--sentences", type=int, default=3000)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)

    scan = bench_scan(args.batch, args.steps, args.hidden, args.repeat)
    sg = bench_skipgram(args.sentences, max(1, args.repeat // 2))
    print(f"{platform.processor() or platform.machine()}, numpy {np.__version__}")
    print(f"GRU scan B={args.batch} T={args.steps} H={args.hidden} (best of {args.repeat}, ms)")
    print(f"  {'':10s}{'numba':>10s}{'numpy':>10s}{'ratio':>8s}")
    for phase in ("forward", "backward"):
        a, b = scan["numba"][phase] * 1e3, scan["numpy"][phase] * 1e3
        print(f"  {phase:10s}{a:10.2f}{b:10.2f}{b / a:8.2f}")
    a, b = sg["numba"] * 1e3, sg["numpy"] * 1e3
    print(f"skip-gram epoch, {args.sentences} sentences (ms)")
    print(f"  {'epoch':10s}{a:10.1f}{b:10.1f}{b / a:8.2f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"scan": scan, "skipgram": sg, "args": vars(args)}, fh, indent=1)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
