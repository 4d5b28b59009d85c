"""Compare the compiled and pure-python kernel backends.

Times each hot kernel on shapes the model actually hits (small sets
through the attention block, wide batches through the embedding), then
a short end-to-end training slice under each backend.

Run from the repo root:

    python3 benchmarks/bench_backends.py
"""

import time

import numpy as np

from setgrade import data, kernels, trainer

KERNELS = ("matmul", "matmul_nt", "matmul_tn", "add_rowvec", "relu",
           "relu_bwd", "softmax_rows", "softmax_rows_bwd", "col_sum")

# (rows, inner, cols): attention-block and embedding shapes
SHAPES = ((8, 20, 20), (8, 8, 10), (64, 10, 20), (512, 20, 20))


def _args_for(name, a, b, rng):
    if name in ("matmul", "matmul_nt", "matmul_tn"):
        return (a, b)
    if name == "add_rowvec":
        return (a, np.ascontiguousarray(a[:1]))
    if name in ("relu", "softmax_rows"):
        return (a,)
    if name == "relu_bwd":
        return (a, rng.normal(size=a.shape))
    if name == "softmax_rows_bwd":
        soft = kernels.active.softmax_rows(a)
        return (rng.normal(size=a.shape), soft)
    return (a,)   # col_sum


def _time(fn, args, repeats):
    best = np.inf
    for _ in range(5):
        start = time.perf_counter()
        for _ in range(repeats):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / repeats)
    return best * 1e6   # microseconds


def bench_kernels():
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'shape':<16}"
          + "".join(f"{name:>14}" for name in kernels.available_backends())
          + f"{'speedup':>10}")
    for rows, inner, cols in SHAPES:
        a = rng.normal(size=(rows, inner))
        b_by_kernel = {
            "matmul": rng.normal(size=(inner, cols)),
            "matmul_nt": rng.normal(size=(cols, inner)),
            "matmul_tn": rng.normal(size=(rows, cols)),
        }
        for name in KERNELS:
            times = {}
            for backend in kernels.available_backends():
                module = kernels.backend_module(backend)
                args = _args_for(name, a, b_by_kernel.get(name, a), rng)
                times[backend] = _time(getattr(module, name), args,
                                       repeats=200)
            row = f"{name:<18}{f'{rows}x{inner}':<16}"
            row += "".join(f"{times[k]:>12.1f}us"
                           for k in kernels.available_backends())
            if len(times) == 2:
                row += f"{times['python'] / times['compiled']:>9.2f}x"
            print(row)


def bench_training():
    dataset = data.synth_blobs(400, 20, 6, 4.0, seed=0)
    prepared = data.split(dataset, data.SplitSpec(labeled_anomaly_count=8))
    hp = trainer.Hyperparams(epochs=2, batches_per_epoch=5, batch_size=16,
                             set_size=8, seed=0)
    print("\ntraining slice (2 epochs x 5 batches x 16 sets of 8):")
    walls = {}
    previous = kernels.active.NAME
    try:
        for backend in kernels.available_backends():
            kernels.set_backend(backend)
            start = time.perf_counter()
            trainer.train(prepared.unlabeled, prepared.anomalies, hp)
            walls[backend] = time.perf_counter() - start
            print(f"  {backend:<10}{walls[backend] * 1000:>10.1f} ms")
    finally:
        kernels.set_backend(previous)
    if len(walls) == 2:
        print(f"  speedup   {walls['python'] / walls['compiled']:>9.2f}x")


if __name__ == "__main__":
    print(f"available backends: {kernels.available_backends()}")
    print(f"active backend: {kernels.active.NAME}\n")
    bench_kernels()
    bench_training()
