"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is run on identical inputs with every available backend; the
table reports the best wall time and the speedup over ``python``.
"""
import argparse
import timeit

import numpy as np

from dnls import kernels
from dnls.nonlin import catalog
from dnls.spectral import Grid1D, Propagator, gaussian, initial_alpha


def cubic_case(M=2048):
    # the two-component system's accumulate call, at production grid size
    rng = np.random.default_rng(0)
    fields = rng.standard_normal((8, M)) + 1j * rng.standard_normal((8, M))
    terms = np.array([[0, 0, 2, 5], [1, 1, 0, 7], [0, 3, 3, 1], [1, 4, 2, 6]], dtype=np.int64)
    coeffs = np.array([-1j, -1j, 0.5, 2 - 1j])
    out = np.zeros((2, M), dtype=np.complex128)

    def call(impl):
        out[:] = 0
        kernels.cubic_accumulate(fields, terms, coeffs, out, impl=impl)
    return call


def simpson_case(tau=1e4):
    xi = np.linspace(-20, 20, 8001)
    vals = np.exp(-xi ** 2 / 2)

    def call(impl):
        kernels.simpson_sampled(xi[0], xi[1] - xi[0], vals, 0.0, tau, -20.0, 20.0, 1e-10, impl=impl)
    return call


def rhs_case():
    g = Grid1D(60.0, 2048)
    prop = Propagator(catalog("two_component_lnss"), g)
    alpha = initial_alpha(0.2 * np.array([gaussian(g.x, shift=-1), gaussian(g.x, shift=1)]), g)

    def call(impl):
        saved = kernels._impl
        kernels._impl = kernels.available_backends()[impl]
        try:
            prop.rhs(5.0, alpha)
        finally:
            kernels._impl = saved
    return call


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = list(kernels.available_backends())
    print(f"active backend: {kernels.BACKEND}")
    if "cython" not in backends:
        print("compiled extension not built; only the fallback is timed")
    cases = {"cubic_accumulate": (cubic_case(), 50), "simpson_sampled": (simpson_case(), 5),
             "rhs (full step)": (rhs_case(), 20)}
    print(f"{'kernel':<18} " + " ".join(f"{b:>12}" for b in backends) + "   speedup")
    for name, (call, number) in cases.items():
        best = {}
        for b in backends:
            t = timeit.repeat(lambda: call(b), number=number, repeat=args.repeat)
            best[b] = min(t) / number
        row = " ".join(f"{best[b] * 1e3:10.3f}ms" for b in backends)
        speed = f"{best['python'] / best['cython']:8.1f}x" if "cython" in best else ""
        print(f"{name:<18} {row} {speed}")


if __name__ == "__main__":
    main()
