"""Time the compiled kernels against the numpy/Python fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Reports the median wall time per call for each kernel and backend, plus a
full training step with each backend forced.
"""
import argparse
import statistics
import timeit

import numpy as np

from smre import _pykernels

try:
    from smre import _ckernels
except ImportError:
    _ckernels = None


def _lstm_buffers(B, H, dtype, rng):
    z = rng.normal(size=(B, 4 * H)).astype(dtype)
    c = rng.normal(size=(B, H)).astype(dtype)
    fwd = (z, c, np.empty((B, 2 * H), dtype), np.empty((B, 4 * H), dtype), np.empty((B, H), dtype))
    dhc = rng.normal(size=(B, 2 * H)).astype(dtype)
    bwd = (dhc, fwd[3], fwd[4], c, np.empty_like(z), np.empty_like(c))
    return fwd, bwd


def _median(fn, repeat, number):
    return statistics.median(timeit.repeat(fn, repeat=repeat, number=number)) / number


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    rows = []
    for B, H in ((1, 512), (16, 512), (64, 256)):
        fwd, bwd = _lstm_buffers(B, H, np.float32, rng)
        for name, mod in (("python", _pykernels), ("cython", _ckernels)):
            if mod is None:
                continue
            mod.lstm_forward(*fwd)
            rows.append((f"lstm_forward B={B} H={H}", name,
                         _median(lambda: mod.lstm_forward(*fwd), repeat, 200)))
            rows.append((f"lstm_backward B={B} H={H}", name,
                         _median(lambda: mod.lstm_backward(*bwd), repeat, 200)))
    for n in (12, 40):
        a = rng.integers(0, 30, n).astype(np.int64)
        b = rng.integers(0, 30, n).astype(np.int64)
        for name, mod in (("python", _pykernels), ("cython", _ckernels)):
            if mod is not None:
                rows.append((f"lcs_length n={n}", name,
                             _median(lambda: mod.lcs_length(a, b), repeat, 500)))
    return rows


def bench_train_step(repeat):
    """A B=8 training step with each backend patched into the kernel table."""
    from smre import kernels
    from smre.config import TrainConfig
    from smre.data import CorpusSpec, generate_corpus
    from smre.encoders import build_vocabulary, make_batch
    from smre.optim import AdamState
    from smre.params import init_params
    from smre.training import train_step

    recs = generate_corpus(CorpusSpec(n_videos=8))
    cfg = TrainConfig()
    vocab = build_vocabulary([r.captions[0] for r in recs], 1)
    batch = make_batch([r.features for r in recs], [r.captions[0] for r in recs], vocab)
    rows = []
    saved = (kernels.lstm_forward, kernels.lstm_backward)
    try:
        for name, mod in (("python", _pykernels), ("cython", _ckernels)):
            if mod is None:
                continue
            kernels.lstm_forward, kernels.lstm_backward = mod.lstm_forward, mod.lstm_backward
            params = init_params(cfg.dims, len(vocab), seed=0)
            opt = AdamState.zeros(params)
            step = iter(range(10 ** 6))
            rows.append(("train_step B=8", name,
                         _median(lambda: train_step(batch, params, opt, cfg, step=next(step)),
                                 max(3, repeat // 2), 3)))
    finally:
        kernels.lstm_forward, kernels.lstm_backward = saved
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; only the fallback is timed")
    rows = bench_kernels(args.repeat) + bench_train_step(args.repeat)
    by_case = {}
    for case, backend, t in rows:
        by_case.setdefault(case, {})[backend] = t
    print(f"{'case':<28}{'python':>12}{'cython':>12}{'speedup':>10}")
    for case, t in by_case.items():
        py, cy = t.get("python"), t.get("cython")
        sp = f"{py / cy:9.1f}x" if py and cy else "-"
        fmt = lambda v: f"{v * 1e6:10.1f}us" if v is not None else f"{'-':>12}"
        print(f"{case:<28}{fmt(py)}{fmt(cy)}{sp:>10}")


if __name__ == "__main__":
    main()
