"""Multi-chain split-Rhat and quantile stability on the example records."""

from pathlib import Path

import numpy as np
from scipy.special import expit

from sfpinfer import Diagnostic, Prior, SamplerConfig, rhat, sample
from sfpinfer.fileio import ingest_records

RECORDS = Path(__file__).resolve().parents[1] / "tests" / "data" / "small_records.csv"


def main():
    data = ingest_records(RECORDS)
    draws = sample(data, Diagnostic(), Prior("normal", -2.0, 1.0),
                   SamplerConfig(seed=0, chains=4, inference_draws=2000))
    names = data.chain.test_node_names + data.chain.supply_node_names
    for name, r in zip(names, rhat(draws)):
        print(f"{name}: split-Rhat {r:.4f}")
    x = expit(draws.chain_logit_draws)
    for c, chain in enumerate(x):
        final = np.quantile(chain, [0.05, 0.95], axis=0)
        drift = max(np.abs(np.quantile(chain[:t], [0.05, 0.95], axis=0) - final).max()
                    for t in range(chain.shape[0] - 500, chain.shape[0] + 1))
        print(f"chain {c}: max quantile drift over last 500 draws {100 * drift:.2f} pp")


if __name__ == "__main__":
    main()
