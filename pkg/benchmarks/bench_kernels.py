"""Time the compiled and pure-Python MCMC kernels on the same chains.

    python benchmarks/bench_kernels.py [--iterations 2000] [--sizes 4,8,16,32]

Both backends consume the same uniforms, so the script also checks that they
return identical samples.
"""
import argparse
import time

import numpy as np

from bayestage import kernels
from bayestage.priors import PriorSpec
from bayestage.sampler import ChainConfig, DepthModel, run_depth


def problem(n, seed=0):
    rng = np.random.default_rng(seed)
    counts = rng.integers(0, 40, size=(n, 2))
    d = rng.random((n, n))
    d = (d + d.T) / 2
    return DepthModel.from_arrays(counts, PriorSpec(), d)


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--sizes", default="4,8,16,32")
    args = ap.parse_args(argv)
    cfg = ChainConfig(iterations=args.iterations, burn_in=0, thin=1, seed=1)
    backends = [b for b in ("python", "cython") if b in kernels.BACKENDS]
    print(f"{'contexts':>8} " + " ".join(f"{b + ' s':>10}" for b in backends) + f" {'speedup':>8} {'same':>5}")
    for n in (int(x) for x in args.sizes.split(",")):
        model = problem(n)
        times, outs = [], []
        for b in backends:
            t = time.perf_counter()
            out, _ = run_depth(model, cfg, backend=b)
            times.append(time.perf_counter() - t)
            outs.append(out)
        speed = times[0] / times[-1] if len(times) > 1 else 1.0
        same = all(np.array_equal(outs[0], o) for o in outs[1:])
        print(f"{n:>8} " + " ".join(f"{t:>10.3f}" for t in times) + f" {speed:>8.1f} {str(same):>5}")


if __name__ == "__main__":
    main()
