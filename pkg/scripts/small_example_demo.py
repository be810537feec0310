"""Posterior intervals for the three-pharmacy, two-distributor example."""

from pathlib import Path

from sfpinfer import Diagnostic, Prior, SamplerConfig, Thresholds, classify, credible_intervals, sample, wald_interval
from sfpinfer.fileio import ingest_records

RECORDS = Path(__file__).resolve().parents[1] / "tests" / "data" / "small_records.csv"


def main():
    data = ingest_records(RECORDS)
    draws = sample(data, Diagnostic(), Prior("normal", -2.0, 1.0), SamplerConfig(seed=0))
    names = data.chain.test_node_names + data.chain.supply_node_names
    ivs = classify(credible_intervals(draws, 0.10, labels=names), Thresholds(0.05, 0.30))
    print(f"{'node':6s} {'q05':>7s} {'median':>7s} {'q95':>7s}  {'wald 90%':>17s}  category")
    for k, iv in enumerate(ivs):
        mask = data.test_idx == iv.index if iv.echelon == "test" else data.supply_idx == iv.index
        w = wald_interval(int(data.result[mask].sum()), int(mask.sum()))
        print(f"{iv.label:6s} {iv.lower:7.3f} {iv.median:7.3f} {iv.upper:7.3f}  "
              f"({w.lower:6.3f}, {w.upper:6.3f})  {iv.category}")
    print(f"divergences: {draws.divergences}")


if __name__ == "__main__":
    main()
