"""Command-line entry point: ``sfpinfer {infer,simulate,witness,bootstrap,wald}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
import traceback
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import fileio
from .fileio import ingest_records
from .identifiability import max_consolidated_gap, tracked_witness, untracked_witness
from .inference import (
    CATEGORIES,
    Thresholds,
    bootstrap_q_sensitivity,
    classify,
    credible_intervals,
    estimate_q,
    wald_interval,
)
from .likelihood import log_likelihood
from .nuts_sampler import SamplerConfig, SamplerError, rhat, sample
from .priors import LAPLACE, NORMAL, Prior
from .supply_model import TRACKED, UNTRACKED, Dataset, Diagnostic, DomainError, SourcingMatrix
from .synth import GenConfig, generate_chain, simulate_tests, trace_density

log = logging.getLogger("sfpinfer")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


def sig4(x: float) -> float:
    return float(f"{x:.4g}")


@dataclass
class RunConfig:
    command: str
    input: Optional[Path] = None
    sourcing: Optional[Path] = None
    mode: Optional[str] = None
    sens: float = 1.0
    spec: float = 1.0
    prior: str = LAPLACE
    gamma: float = -2.5
    nu: float = 1.3
    nu_is_variance: bool = False
    delta: float = 0.4
    warmup: int = 5000
    draws: int = 1000
    chains: int = 1
    max_depth: int = 10
    l: float = 0.05
    u: float = 0.30
    alpha: float = 0.10
    seed: int = 0
    out: Path = Path("out")
    # simulate
    n_test: int = 10
    n_supply: int = 10
    tests: int = 1000
    pareto_shape: float = 0.7
    # witness
    rates: Optional[Path] = None
    anchor: int = 0
    epsilon: Optional[float] = None
    # bootstrap
    n_boot: int = 100
    full_records: bool = False
    # wald
    positives: Optional[int] = None
    n: Optional[int] = None

    @property
    def diagnostic(self) -> Diagnostic:
        return Diagnostic(self.sens, self.spec)

    @property
    def prior_obj(self) -> Prior:
        if self.prior == NORMAL and self.nu_is_variance:
            return Prior.normal_from_variance(self.gamma, self.nu)
        return Prior(self.prior, self.gamma, self.nu)

    @property
    def sampler(self) -> SamplerConfig:
        return SamplerConfig(
            target_accept=self.delta,
            warmup_draws=self.warmup,
            inference_draws=self.draws,
            max_tree_depth=self.max_depth,
            seed=self.seed,
            chains=self.chains,
        )


def _labels(data: Dataset) -> list[str]:
    return list(data.chain.test_node_names) + list(data.chain.supply_node_names)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def _run_infer(cfg: RunConfig) -> None:
    data = ingest_records(cfg.input, cfg.mode, cfg.sourcing)
    prior = cfg.prior_obj
    t0 = time.perf_counter()
    draws = sample(data, cfg.diagnostic, prior, cfg.sampler)
    runtime = time.perf_counter() - t0
    labels = _labels(data)
    intervals = classify(
        credible_intervals(draws, cfg.alpha, data.chain.n_test, labels), Thresholds(cfg.l, cfg.u)
    )
    cfg.out.mkdir(parents=True, exist_ok=True)

    counts = {c: sum(iv.category == c for iv in intervals) for c in CATEGORIES}
    report = {
        "mode": data.mode,
        "records": data.n_records,
        "test_nodes": data.chain.n_test,
        "supply_nodes": data.chain.n_supply,
        "prior": {"family": prior.family, "gamma": prior.gamma, "nu": sig4(prior.nu)},
        "diagnostic": {"sensitivity": cfg.sens, "specificity": cfg.spec},
        "interval_level": sig4(1 - cfg.alpha),
        "thresholds": {"l": cfg.l, "u": cfg.u},
        "category_counts": counts,
        "nodes": [
            {
                "echelon": iv.echelon,
                "node": iv.label,
                "lower": sig4(iv.lower),
                "median": sig4(iv.median),
                "upper": sig4(iv.upper),
                "category": iv.category,
            }
            for iv in intervals
        ],
    }
    _write_json(cfg.out / "report.json", report)

    with open(cfg.out / "quantiles.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["echelon", "node", "lower", "median", "upper", "category"])
        for iv in intervals:
            w.writerow([iv.echelon, iv.label, repr(iv.lower), repr(iv.median), repr(iv.upper), iv.category])

    diag = {
        "runtime_s": runtime,
        "chains": [
            {
                "step_size": d.step_size,
                "mean_accept_stat": d.mean_accept,
                "divergences": d.divergences,
                "mean_tree_depth": float(np.mean(d.tree_depth)),
                "max_tree_depth": int(np.max(d.tree_depth)),
                "leapfrog_steps": d.n_leapfrog,
            }
            for d in draws.diagnostics
        ],
        "divergences": draws.divergences,
    }
    if draws.n_chains >= 2:
        r = rhat(draws)
        diag["rhat"] = dict(zip(labels, map(float, r)))
        diag["max_rhat"] = float(np.max(r))
    _write_json(cfg.out / "diagnostics.json", diag)
    for iv in intervals:
        print(f"{iv.echelon:6s} {iv.label:>12s}  [{iv.lower:.4g}, {iv.upper:.4g}]  {iv.category}")


def _run_simulate(cfg: RunConfig) -> None:
    gen = GenConfig(
        n_test_nodes=cfg.n_test,
        n_supply_nodes=cfg.n_supply,
        pareto_shape=cfg.pareto_shape,
        n_tests=cfg.tests,
        diag=cfg.diagnostic,
        prior=cfg.prior_obj,
        seed=cfg.seed,
        mode=cfg.mode or TRACKED,
    )
    chain, q, rates = generate_chain(gen)
    data = simulate_tests(chain, q, rates, gen)
    cfg.out.mkdir(parents=True, exist_ok=True)
    fileio.write_records(data, cfg.out / "records.csv")
    fileio.write_sourcing(chain, q, cfg.out / "sourcing.csv")
    fileio.write_rates(chain, rates, cfg.out / "truth.csv")
    summary = {"records": data.n_records, "positives": int(data.result.sum()), "mode": data.mode}
    if data.mode == TRACKED:
        summary["trace_density"] = trace_density(data)
    _write_json(cfg.out / "simulation.json", summary)
    print(json.dumps(summary))


def _run_witness(cfg: RunConfig) -> None:
    if cfg.rates is None:
        raise DomainError("witness needs --rates")
    chain, rates = fileio.read_rates(cfg.rates)
    mode = cfg.mode or (UNTRACKED if cfg.sourcing is not None else TRACKED)
    q = None
    if mode == UNTRACKED:
        if cfg.sourcing is None:
            raise DomainError("untracked witness needs --sourcing")
        s_tests, s_supply, mat = fileio.read_sourcing(cfg.sourcing)
        if s_tests != list(chain.test_node_names) or s_supply != list(chain.supply_node_names):
            raise DomainError("sourcing labels do not match the rates file")
        q = SourcingMatrix(mat)
        w = untracked_witness(rates, q, cfg.anchor, cfg.epsilon)
    else:
        w = tracked_witness(rates, cfg.anchor, cfg.epsilon)
    cfg.out.mkdir(parents=True, exist_ok=True)
    fileio.write_rates(chain, w.perturbed, cfg.out / "witness_rates.csv")
    with open(cfg.out / "witness.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["echelon", "node", "original", "perturbed"])
        for (ech, label), a, b in zip(chain.node_labels(), w.original.as_vector(), w.perturbed.as_vector()):
            wr.writerow([ech, label, repr(float(a)), repr(float(b))])
    check = {
        "mode": w.mode,
        "anchor": w.anchor,
        "epsilon": w.epsilon,
        "max_consolidated_rate_gap": max_consolidated_gap(w, q),
    }
    if cfg.input is not None:
        data = ingest_records(cfg.input, mode, cfg.sourcing, chain=chain)
        check["loglik_original"] = log_likelihood(w.original, data, cfg.diagnostic)
        check["loglik_perturbed"] = log_likelihood(w.perturbed, data, cfg.diagnostic)
        check["loglik_gap"] = abs(check["loglik_original"] - check["loglik_perturbed"])
    _write_json(cfg.out / "witness.json", check)
    print(json.dumps(check))


def _run_bootstrap(cfg: RunConfig) -> None:
    data = ingest_records(cfg.input, TRACKED)
    res = bootstrap_q_sensitivity(
        data, cfg.diagnostic, cfg.prior_obj, cfg.sampler, cfg.n_boot, cfg.seed, cfg.alpha, cfg.full_records
    )
    base = sample(data.as_untracked(estimate_q(data)), cfg.diagnostic, cfg.prior_obj, cfg.sampler)
    ivs = credible_intervals(base, cfg.alpha, data.chain.n_test, _labels(data))
    lo_l, hi_l = res.endpoint_band("lower")
    lo_u, hi_u = res.endpoint_band("upper")
    cfg.out.mkdir(parents=True, exist_ok=True)
    with open(cfg.out / "bootstrap.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["echelon", "node", "lower", "upper", "lower_q05", "lower_q95", "upper_q05", "upper_q95"])
        for k, iv in enumerate(ivs):
            ends = (iv.lower, iv.upper, lo_l[k], hi_l[k], lo_u[k], hi_u[k])
            w.writerow([iv.echelon, iv.label, *(repr(float(v)) for v in ends)])
    summary = {
        "n_boot": cfg.n_boot,
        "mean_test_node_spread": float(np.mean(res.test_spread())),
        "mean_supply_node_spread": float(np.mean(res.supply_spread())),
    }
    _write_json(cfg.out / "bootstrap.json", summary)
    print(json.dumps(summary))


def _run_wald(cfg: RunConfig) -> None:
    rows = []
    if cfg.input is None:
        if cfg.positives is None or cfg.n is None:
            raise DomainError("wald needs either --input or both --positives and --n")
        rows.append(("", "", cfg.positives, cfg.n))
    else:
        data = ingest_records(cfg.input, cfg.mode, cfg.sourcing)
        for i, label in enumerate(data.chain.test_node_names):
            m = data.test_idx == i
            if m.any():
                rows.append(("test", label, int(data.result[m].sum()), int(m.sum())))
        if data.mode == TRACKED:
            for j, label in enumerate(data.chain.supply_node_names):
                m = data.supply_idx == j
                if m.any():
                    rows.append(("supply", label, int(data.result[m].sum()), int(m.sum())))
    t = Thresholds(cfg.l, cfg.u)
    out = []
    for ech, label, k, n in rows:
        wi = wald_interval(k, n)
        out.append({
            "echelon": ech, "node": label, "positives": k, "n": n,
            "lower": wi.lower, "upper": wi.upper,
            "meets_requirement": wi.meets_requirement,
            "exceeds_l": wi.lower > t.l,
        })
    if cfg.input is not None:
        cfg.out.mkdir(parents=True, exist_ok=True)
        with open(cfg.out / "wald.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(out[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(out)
    for row in out:
        print(f"{row['echelon']:6s} {row['node']:>12s} {row['positives']}/{row['n']}  "
              f"({row['lower']:.4g}, {row['upper']:.4g})  requirement={'met' if row['meets_requirement'] else 'not met'}")


COMMANDS = {
    "infer": _run_infer,
    "simulate": _run_simulate,
    "witness": _run_witness,
    "bootstrap": _run_bootstrap,
    "wald": _run_wald,
}


def _origin(exc: BaseException) -> str:
    """Innermost package module the exception passed through."""
    name = "cli"
    tb = exc.__traceback__
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("sfpinfer."):
            name = mod.split(".", 1)[1]
        tb = tb.tb_next
    return name


def run(cfg: RunConfig) -> int:
    """Execute one subcommand; returns the process exit code."""
    try:
        COMMANDS[cfg.command](cfg)
    except (SamplerError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"sfpinfer: numerical failure in {_origin(exc)}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, ValueError, OSError, KeyError) as exc:
        print(f"sfpinfer: data error in {_origin(exc)}: {exc}", file=sys.stderr)
        log.debug("%s", traceback.format_exc())
        return EXIT_DATA
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--mode", choices=[TRACKED, UNTRACKED])
    common.add_argument("--sourcing", type=Path, help="sourcing matrix file")
    common.add_argument("--sens", type=float, default=1.0, help="testing-tool sensitivity")
    common.add_argument("--spec", type=float, default=1.0, help="testing-tool specificity")
    common.add_argument("--prior", choices=[LAPLACE, NORMAL], default=LAPLACE)
    common.add_argument("--gamma", type=float, default=-2.5, help="prior location on the logit scale")
    common.add_argument("--nu", type=float, default=1.3, help="prior spread (normal: std dev, laplace: scale)")
    common.add_argument("--nu-is-variance", action="store_true", help="read --nu as a variance for the normal prior")
    common.add_argument("--delta", type=float, default=0.4, help="NUTS target acceptance")
    common.add_argument("--warmup", type=int, default=5000)
    common.add_argument("--draws", type=int, default=1000)
    common.add_argument("--chains", type=int, default=1)
    common.add_argument("--max-depth", type=int, default=10)
    common.add_argument("--l", type=float, default=0.05, help="lower action threshold")
    common.add_argument("--u", type=float, default=0.30, help="upper investigation threshold")
    common.add_argument("--alpha", type=float, default=0.10, help="credible interval is 1 - alpha")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=Path, default=Path("out"))

    p = _Parser(prog="sfpinfer", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("infer", parents=[common], help="posterior intervals and risk categories")
    sp.add_argument("input", type=Path)

    sp = sub.add_parser("simulate", parents=[common], help="generate a synthetic dataset")
    sp.add_argument("--n-test", type=int, default=10)
    sp.add_argument("--n-supply", type=int, default=10)
    sp.add_argument("--tests", type=int, default=1000)
    sp.add_argument("--pareto-shape", type=float, default=0.7)

    sp = sub.add_parser("witness", parents=[common], help="equal-likelihood alternative rates")
    sp.add_argument("--rates", type=Path, required=True)
    sp.add_argument("--input", type=Path, help="records to verify the likelihood gap on")
    sp.add_argument("--anchor", type=int, default=0, help="0-based anchor node index")
    sp.add_argument("--epsilon", type=float)

    sp = sub.add_parser("bootstrap", parents=[common], help="sensitivity of untracked inference to Q")
    sp.add_argument("input", type=Path)
    sp.add_argument("--n-boot", type=int, default=100)
    sp.add_argument("--full-records", action="store_true", help="resample test results as well as Q")

    sp = sub.add_parser("wald", parents=[common], help="standard 90%% proportion intervals")
    sp.add_argument("input", type=Path, nargs="?")
    sp.add_argument("--positives", type=int)
    sp.add_argument("--n", type=int)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    kwargs = {k: v for k, v in vars(args).items() if k != "verbose"}
    for path_arg in ("input", "sourcing", "rates"):
        path = kwargs.get(path_arg)
        if path is not None and not Path(path).exists():
            print(f"sfpinfer: error: {path_arg} file {path} does not exist", file=sys.stderr)
            return EXIT_USAGE
    try:
        cfg = RunConfig(**kwargs)
        cfg.diagnostic, cfg.prior_obj, cfg.sampler, Thresholds(cfg.l, cfg.u)
    except (DomainError, ValueError) as exc:
        print(f"sfpinfer: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
