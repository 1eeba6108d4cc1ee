"""Time the compiled trellis kernels against the numpy fallback.

Graphs mimic a stage-I line model: a filler loop of single-state-ish
character models feeding a keyword chain, so transitions are sparse.

    python benchmarks/bench_kernels.py --states 120 --frames 400
"""
import argparse
import timeit

import numpy as np

from polyspot import kernels


def line_graph(rng, n_states, loop_width=40):
    """Sparse left-to-right network with a filler loop over the first states."""
    A = np.full((n_states, n_states), -np.inf)
    for i in range(n_states):
        A[i, i] = np.log(0.6)
        if i + 1 < n_states:
            A[i, i + 1] = np.log(0.4)
    for i in range(0, loop_width, 3):
        for j in range(0, loop_width, 3):
            A[i + 2 if i + 2 < loop_width else i, j] = np.log(0.4 / (loop_width / 3))
    pi = np.full(n_states, -np.inf)
    pi[0:loop_width:3] = np.log(3.0 / loop_width)
    final = np.full(n_states, -np.inf)
    final[-1] = 0.0
    return pi, A, final


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--states", type=int, default=120)
    ap.add_argument("--frames", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    rng = np.random.default_rng(a.seed)
    pi, A, final = line_graph(rng, a.states)
    lb = rng.normal(-20.0, 5.0, size=(a.frames, a.states))
    try:
        backends = {"python": kernels.using("python"), "cython": kernels.using("cython")}
    except ImportError:
        backends = {"python": kernels.using("python")}
        print("compiled kernels unavailable; timing the fallback only")
    jobs = {
        "forward": lambda m: m.forward(lb, pi, A, final),
        "backward": lambda m: m.backward(lb, A, final),
        "viterbi": lambda m: m.viterbi(lb, pi, A, final),
    }
    print(f"T={a.frames} N={a.states} (best of {a.repeat})")
    print(f"{'kernel':<10}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, job in jobs.items():
        t = {b: min(timeit.repeat(lambda: job(m), number=1, repeat=a.repeat))
             for b, m in backends.items()}
        outs = [job(m) for m in backends.values()]
        if len(outs) == 2:
            x, y = outs
            if name == "viterbi":
                assert np.array_equal(x[0], y[0]) and x[1] == y[1]
            elif name == "forward":
                assert np.allclose(x[0], y[0], equal_nan=True) and np.isclose(x[1], y[1])
            else:
                assert np.allclose(x, y, equal_nan=True)
        row = "".join(f"{t[b] * 1e3:>10.2f}ms" for b in backends)
        sp = t["python"] / t["cython"] if "cython" in t else float("nan")
        print(f"{name:<10}{row}{sp:>9.1f}x")


if __name__ == "__main__":
    main()
