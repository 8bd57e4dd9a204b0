"""Compare the compiled solver kernel against the pure numpy fallback.

Runs the same planted matching instances through both backends, checks
they agree on the final objective, and reports per-solve wall time plus
speedup. Shapes mirror real use: 256-dimensional features against
template databases of growing state counts.

    python3 benchmarks/bench_solver.py [--repeats N] [--seed S]
"""

import argparse
import time

import numpy as np

from smal.solver import QuerySequence, SolverConfig, TemplateMatrix, solve

# (m, k, l): feature length, enrolled states, window length
SHAPES = [
    (40, 4, 6),
    (256, 10, 4),
    (256, 30, 4),
    (256, 60, 4),
    (256, 30, 8),
]


def planted(rng, m, k, l, noise=0.1):
    X = rng.normal(size=(m, k * l))
    X /= np.linalg.norm(X, axis=0)
    W = np.zeros((k * l, l))
    g = int(rng.integers(0, k))
    W[g * l:(g + 1) * l] = rng.normal(size=(l, l)) * (rng.random((l, l)) < 0.4)
    Y = X @ W + noise * rng.normal(size=(m, l))
    return TemplateMatrix(X, seq_len=l), QuerySequence(Y)


def best_time(X, Y, backend, repeats):
    cfg = SolverConfig()
    best = float("inf")
    final = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        _, state = solve(X, Y, cfg, backend=backend)
        best = min(best, time.perf_counter() - t0)
        final = state.objective_trace[-1]
    return best, final


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5,
                    help="timed runs per shape; best is reported")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"{'shape (m,k,l)':>16} {'python':>10} {'compiled':>10} "
          f"{'speedup':>8}  agreement")
    for m, k, l in SHAPES:
        X, Y = planted(rng, m, k, l)
        t_py, f_py = best_time(X, Y, "python", args.repeats)
        try:
            t_c, f_c = best_time(X, Y, "compiled", args.repeats)
        except ValueError:
            print(f"{f'{m},{k},{l}':>16} {t_py * 1e3:9.2f}ms {'n/a':>10} "
                  f"{'n/a':>8}  compiled backend not built")
            continue
        rel = abs(f_py - f_c) / max(abs(f_py), 1e-12)
        print(f"{f'{m},{k},{l}':>16} {t_py * 1e3:9.2f}ms {t_c * 1e3:9.2f}ms "
              f"{t_py / t_c:7.2f}x  rel {rel:.1e}")


if __name__ == "__main__":
    main()
