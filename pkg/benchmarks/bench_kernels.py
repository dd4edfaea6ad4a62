"""Compare the compiled kernels with the numpy fallback.

Run with ``python benchmarks/bench_kernels.py``. The first table times each
kernel in isolation on desk-sized inputs. The second times one training
step (forward plus backward over a 50-candidate query group) with each
backend selected through ``LTCS_KERNELS`` in a fresh interpreter.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from ltcs.nn import _pykernels

try:
    from ltcs.nn import _ckernels
except ImportError:
    _ckernels = None

STEP = """
import timeit, numpy as np
from ltcs.model import desk_preset, LtcsModel
from ltcs.training import group_loss
from ltcs.world import WorldConfig, generate_dataset
cfg = desk_preset(precision={precision})
model = LtcsModel(cfg)
groups = generate_dataset(WorldConfig(num_queries=20))
def step():
    for g in groups:
        group_loss(model, g, 0.5)
print(min(timeit.repeat(step, number=1, repeat={repeat})) / len(groups))
"""


def kernel_cases(dtype, rows=50, width=32, k=10, heads=2):
    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(rng.normal(size=(rows, width)), dtype)
    dy = np.ascontiguousarray(rng.normal(size=(rows, width)), dtype)
    gain = np.ones(width, dtype)
    bias = np.zeros(width, dtype)
    q, kk, v = (np.ascontiguousarray(rng.normal(size=(k, width)), dtype) for _ in range(3))
    dout = np.ascontiguousarray(rng.normal(size=(k, width)), dtype)

    def cases(mod):
        _, xhat, rstd = mod.layer_norm_forward(x, gain, bias, 1e-5)
        _, probs = mod.attention_forward(q, kk, v, heads)
        return {
            "smelu_forward": lambda: mod.smelu_forward(x, 1.0),
            "smelu_backward": lambda: mod.smelu_backward(x, dy, 1.0),
            "layer_norm_forward": lambda: mod.layer_norm_forward(x, gain, bias, 1e-5),
            "layer_norm_backward": lambda: mod.layer_norm_backward(dy, xhat, rstd, gain),
            "attention_forward": lambda: mod.attention_forward(q, kk, v, heads),
            "attention_backward": lambda: mod.attention_backward(dout, q, kk, v, probs, heads),
        }
    return cases


def best(fn, number):
    return min(timeit.repeat(fn, number=number, repeat=5)) / number


def bench_kernels(precision, number):
    dtype = np.float32 if precision == 32 else np.float64
    cases = kernel_cases(dtype)
    py = cases(_pykernels)
    cy = cases(_ckernels) if _ckernels else {}
    print(f"\nkernels, float{precision} (microseconds per call)")
    print(f"{'kernel':<22}{'numpy':>10}{'cython':>10}{'speedup':>9}")
    for name, fn in py.items():
        t_py = best(fn, number) * 1e6
        if name in cy:
            t_cy = best(cy[name], number) * 1e6
            print(f"{name:<22}{t_py:>10.1f}{t_cy:>10.1f}{t_py / t_cy:>8.2f}x")
        else:
            print(f"{name:<22}{t_py:>10.1f}{'-':>10}{'-':>9}")


def bench_step(precision, repeat):
    print(f"\ntraining step per query group, float{precision} (milliseconds)")
    times = {}
    for backend in ("python", "cython"):
        if backend == "cython" and _ckernels is None:
            continue
        env = dict(os.environ, LTCS_KERNELS=backend)
        out = subprocess.run([sys.executable, "-c",
                              STEP.format(precision=precision, repeat=repeat)],
                             env=env, capture_output=True, text=True, check=True)
        times[backend] = float(out.stdout.strip()) * 1e3
        print(f"{backend:<10}{times[backend]:>10.2f}")
    if len(times) == 2:
        print(f"speedup   {times['python'] / times['cython']:>9.2f}x")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--precision", type=int, choices=(32, 64), default=32)
    p.add_argument("--number", type=int, default=2000, help="calls per kernel timing")
    p.add_argument("--repeat", type=int, default=3, help="repeats of the training step")
    args = p.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; only the numpy fallback is timed")
    bench_kernels(args.precision, args.number)
    bench_step(args.precision, args.repeat)


if __name__ == "__main__":
    main()
