"""Wall-clock time of a default sampler run across chain sizes."""

import argparse
import time

from sfpinfer import Diagnostic, Prior, SamplerConfig, sample
from sfpinfer.synth import GenConfig, generate_chain, simulate_tests


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[10, 25, 50])
    ap.add_argument("--tests", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for n in args.sizes:
        gen = GenConfig(n_test_nodes=n, n_supply_nodes=n, n_tests=args.tests, seed=args.seed)
        chain, q, rates = generate_chain(gen)
        data = simulate_tests(chain, q, rates, gen)
        t0 = time.perf_counter()
        draws = sample(data, Diagnostic(), Prior(), SamplerConfig(seed=args.seed))
        print(f"{n}x{n}: {time.perf_counter() - t0:6.1f} s, {draws.divergences} divergences")


if __name__ == "__main__":
    main()
