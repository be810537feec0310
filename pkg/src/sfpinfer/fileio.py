"""Delimited-text formats for records, sourcing matrices and rate vectors.

Records: header ``test_node,supply_node,result``; ``supply_node`` may be
blank. Sourcing matrix: header ``test_node,<supply labels...>`` with one
row per test node. Rates: header ``echelon,node,rate``.

Node indices follow first appearance in the records file unless a
sourcing file fixes them.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Optional

import numpy as np

from .inference import estimate_q
from .supply_model import (
    TRACKED,
    UNTRACKED,
    Dataset,
    DomainError,
    RateVector,
    SourcingMatrix,
    SupplyChain,
)

RECORD_COLUMNS = ("test_node", "supply_node", "result")


class DataError(DomainError):
    """Malformed or inconsistent input file."""


def _reader(path) -> tuple[csv.reader, list[str]]:
    text = Path(path).read_text()
    if not text.strip():
        raise DataError(f"{path}: empty file")
    first = text.splitlines()[0]
    try:
        dialect = csv.Sniffer().sniff(first, delimiters=",\t;")
    except csv.Error:
        dialect = csv.excel
    rows = list(csv.reader(io.StringIO(text), dialect))
    return rows[0], rows[1:]


def _check_records_mode(mode: Optional[str], has_supply: list[bool], path) -> str:
    if mode is not None:
        return mode
    if all(has_supply):
        return TRACKED
    if not any(has_supply):
        return UNTRACKED
    first_blank = has_supply.index(False) + 2
    raise DataError(
        f"{path}: mixes tracked and untracked records (first blank supply_node on line "
        f"{first_blank}); pass an explicit mode"
    )


def read_sourcing(path) -> tuple[list[str], list[str], np.ndarray]:
    """Test labels, supply labels and raw matrix from a sourcing file."""
    header, rows = _reader(path)
    if not header or header[0].strip() != "test_node":
        raise DataError(f"{path}: first header column must be 'test_node'")
    supply = [h.strip() for h in header[1:]]
    tests, mat = [], []
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            mat.append([float(c) for c in row[1:]])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        tests.append(row[0].strip())
    return tests, supply, np.array(mat, dtype=float)


def ingest_records(
    path, mode: Optional[str] = None, sourcing_path=None, chain: Optional[SupplyChain] = None
) -> Dataset:
    """Parse a records file into a :class:`Dataset`.

    ``mode`` defaults to tracked when every record names a supply node and
    untracked when none does; mixed files need an explicit mode.

    With ``sourcing_path`` the sourcing file's row and column order fixes
    node indices (so nodes without tests are kept) and untracked data use
    its Q. A given ``chain`` fixes the order the same way. Otherwise indices
    follow first appearance in the records and untracked Q is estimated
    from the supply labels present.
    """
    header, rows = _reader(path)
    header = [h.strip() for h in header]
    missing = [c for c in RECORD_COLUMNS if c not in header]
    if missing:
        raise DataError(f"{path}: missing header column(s) {missing}")
    ia, ib, iy = (header.index(c) for c in RECORD_COLUMNS)
    parsed = []
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        tn, sn, res = row[ia].strip(), row[ib].strip(), row[iy].strip()
        if not tn:
            raise DataError(f"{path}:{lineno}: empty test_node")
        if res not in ("0", "1"):
            raise DataError(f"{path}:{lineno}: result must be 0 or 1, got {res!r}")
        parsed.append((lineno, tn, sn, int(res)))
    if not parsed:
        raise DataError(f"{path}: no records")
    has_supply = [bool(p[2]) for p in parsed]
    mode = _check_records_mode(mode, has_supply, path)
    if mode == TRACKED and not all(has_supply):
        lineno = parsed[has_supply.index(False)][0]
        raise DataError(f"{path}:{lineno}: tracked record without supply_node")

    q = None
    if sourcing_path is not None:
        s_tests, s_supply, mat = read_sourcing(sourcing_path)
        tests = {t: i for i, t in enumerate(s_tests)}
        supplies = {t: i for i, t in enumerate(s_supply)}
        q = SourcingMatrix(mat)
        fixed = True
        if chain is not None and (tuple(s_tests), tuple(s_supply)) != (
            chain.test_node_names, chain.supply_node_names
        ):
            raise DataError(f"{sourcing_path}: labels do not match the given chain")
    elif chain is not None:
        tests = {t: i for i, t in enumerate(chain.test_node_names)}
        supplies = {t: i for i, t in enumerate(chain.supply_node_names)}
        fixed = True
    else:
        tests, supplies, fixed = {}, {}, False
    a, b, y = [], [], []
    for lineno, tn, sn, res in parsed:
        if fixed and tn not in tests:
            raise DataError(f"{path}:{lineno}: unknown test node {tn!r}")
        a.append(tests.setdefault(tn, len(tests)))
        if sn and (mode == TRACKED or q is None):
            if fixed and sn not in supplies:
                raise DataError(f"{path}:{lineno}: unknown supply node {sn!r}")
            b.append(supplies.setdefault(sn, len(supplies)))
        else:
            b.append(-1)
        y.append(res)
    chain = SupplyChain(tuple(tests), tuple(supplies))
    if mode == TRACKED:
        return Dataset(chain, a, b, y, mode=TRACKED)
    if q is None:
        if not all(has_supply):
            raise DataError(f"{path}: untracked data need a sourcing matrix or supply labels to estimate one")
        q = estimate_q(Dataset(chain, a, b, y, mode=TRACKED))
    return Dataset(chain, a, [-1] * len(a), y, mode=UNTRACKED, sourcing=q)


def write_records(data: Dataset, path, include_supply: Optional[bool] = None) -> None:
    """Write records; untracked datasets get a blank supply_node column."""
    if include_supply is None:
        include_supply = data.mode == TRACKED
    tn, sn = data.chain.test_node_names, data.chain.supply_node_names
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for a, b, y in zip(data.test_idx, data.supply_idx, data.result):
            w.writerow([tn[a], sn[b] if include_supply and b >= 0 else "", int(y)])


def write_sourcing(chain: SupplyChain, q: SourcingMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["test_node", *chain.supply_node_names])
        for label, row in zip(chain.test_node_names, q.q):
            w.writerow([label, *(repr(float(v)) for v in row)])


def write_rates(chain: SupplyChain, rates: RateVector, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["echelon", "node", "rate"])
        for label, v in zip(chain.test_node_names, rates.eta):
            w.writerow(["test", label, repr(float(v))])
        for label, v in zip(chain.supply_node_names, rates.theta):
            w.writerow(["supply", label, repr(float(v))])


def read_rates(path) -> tuple[SupplyChain, RateVector]:
    header, rows = _reader(path)
    if [h.strip() for h in header] != ["echelon", "node", "rate"]:
        raise DataError(f"{path}: header must be echelon,node,rate")
    tests, supplies = {}, {}
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 fields")
        ech, node, rate = (c.strip() for c in row)
        try:
            val = float(rate)
        except ValueError:
            raise DataError(f"{path}:{lineno}: bad rate {rate!r}") from None
        if ech == "test":
            tests[node] = val
        elif ech == "supply":
            supplies[node] = val
        else:
            raise DataError(f"{path}:{lineno}: echelon must be 'test' or 'supply'")
    chain = SupplyChain(tuple(tests), tuple(supplies))
    return chain, RateVector(list(tests.values()), list(supplies.values()))
