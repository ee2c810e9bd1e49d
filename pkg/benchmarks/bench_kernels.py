"""Compare the compiled kernel core with the numpy fallback.

Times each kernel on a 720p plane (or frame) for both back-ends, then one
end-to-end IOI attack per back-end. Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--height 720 --width 1280]
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from ioi_attack import kernels


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_table(h, w, repeat):
    rng = np.random.default_rng(0)
    plane = rng.random((h, w))
    frame = rng.random((h, w, 3))
    weights = rng.normal(0.0, 0.5, size=(4, 3, 3, 3))
    bias = rng.normal(0.0, 0.1, size=4)
    cases = {
        "box3_stats": lambda k: k.box3_stats(plane),
        "box3_relstd": lambda k: k.box3_relstd(plane, 1e-6),
        "sobel_magnitude": lambda k: k.sobel_magnitude(plane),
        "laplace_valid": lambda k: k.laplace_valid(plane),
        "conv_softplus_mean": lambda k: k.conv_softplus_mean(frame, weights, bias, 2),
        "conv_softplus_mean_grad": lambda k: k.conv_softplus_mean_grad(frame, weights, bias, 2),
    }
    backs = kernels.backends()
    names = sorted(backs)
    print(f"kernels on {h}x{w} (best of {repeat}, ms)")
    print(f"{'kernel':<26}" + "".join(f"{n:>10}" for n in names) + ("   speedup" if len(names) == 2 else ""))
    for label, fn in cases.items():
        row = {n: best_of(lambda: fn(backs[n]), repeat) * 1e3 for n in names}
        line = f"{label:<26}" + "".join(f"{row[n]:>10.2f}" for n in names)
        if len(names) == 2:
            line += f"{row['numpy'] / row['cython']:>9.1f}x"
        print(line)


END_TO_END = """
import time
from ioi_attack import kernels
from ioi_attack.attacks import ioi_attack
from ioi_attack.harness import toy_image
from ioi_attack.metrics import ToyCNN
img = toy_image(0, {h}, {w})
oracle = ToyCNN(0)
ioi_attack(img, oracle)
times = []
for _ in range({repeat}):
    t0 = time.perf_counter()
    ioi_attack(img, oracle)
    times.append(time.perf_counter() - t0)
print(f"{{kernels.BACKEND:<8}} IOI end to end: {{min(times) * 1e3:.1f}} ms")
"""


def end_to_end(h, w, repeat):
    # the back-end is chosen at import time, so each runs in its own interpreter
    code = END_TO_END.format(h=h, w=w, repeat=repeat)
    for forced in ("0", "1"):
        env = dict(os.environ, IOI_ATTACK_PURE_PYTHON=forced)
        subprocess.run([sys.executable, "-c", code], env=env, check=True)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--height", type=int, default=720)
    p.add_argument("--width", type=int, default=1280)
    args = p.parse_args()
    kernel_table(args.height, args.width, args.repeat)
    print(flush=True)
    end_to_end(args.height, args.width, args.repeat)


if __name__ == "__main__":
    main()
