#!/usr/bin/env python3

# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

import argparse
import csv
import logging
import numpy as np
import sys

from pathlib import Path

from create_robust_design.robust_design import (
    kCompareColumns,
    kCompareFile,
    kDesignFile,
    kFrontierColumns,
    kFrontierFile,
)

kIntegerColumns = {"index", "allocation"}


def read_table(path, *, leading=()):
    """Reads one of the run's CSV files into {column name: array}."""
    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path} is empty")
        if list(header[: len(leading)]) != list(leading):
            raise ValueError(f"{path} starts with {header}, expected {list(leading)}")
        rows = list(reader)

    for number, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise ValueError(
                f"{path}:{number} has {len(row)} fields, the header has {len(header)}"
            )

    table = {}
    for j, name in enumerate(header):
        values = [row[j] for row in rows]
        if name in kIntegerColumns:
            table[name] = np.array([int(value) for value in values], dtype=np.int64)
        else:
            table[name] = np.array([float(value) for value in values], dtype=float)
    return table


def read_design(path):
    table = read_table(path, leading=("index",))
    if "weight" not in table:
        raise ValueError(f"{path} has no weight column")
    return table


def read_frontier(path):
    return read_table(path, leading=kFrontierColumns)


def read_compare(path):
    return read_table(path, leading=kCompareColumns)


def summarize_design(table, *, verbosity=0):
    weights = table["weight"]
    support = np.flatnonzero(weights > 0)
    coordinates = [name for name in table if name.startswith("x")]
    print(f"Design: N={weights.size} support={support.size} total={weights.sum():.6g}")
    if "allocation" in table:
        print(f"Allocations: n={table['allocation'].sum()}")
    if verbosity:
        for i in support:
            point = ", ".join(f"{table[name][i]:.6g}" for name in coordinates)
            line = f"  {table['index'][i]}: ({point}) weight={weights[i]:.6g}"
            if "allocation" in table:
                line += f" allocation={table['allocation'][i]}"
            print(line)


def summarize_frontier(table, *, verbosity=0):
    nu = table["nu"]
    print(
        f"Frontier: {nu.size} points, nu in [{nu.min():.6g}, {nu.max():.6g}], "
        + f"var in [{table['var'].min():.6g}, {table['var'].max():.6g}], "
        + f"maxbias in [{table['maxbias'].min():.6g}, {table['maxbias'].max():.6g}]"
    )
    if verbosity:
        for i in range(nu.size):
            print(
                f"  nu={nu[i]:.6g} var={table['var'][i]:.6g} "
                + f"maxbias={table['maxbias'][i]:.6g} cmb={table['cmb'][i]:.6g}"
            )


def summarize_compare(table, *, verbosity=0):
    continuous = table["loss_continuous"]
    ceil_remove = table["loss_ceil_remove"]
    efficient = table["loss_efficient_apportionment"]
    with np.errstate(invalid="ignore"):
        worse = int(np.sum(efficient > ceil_remove))
    print(
        f"Comparison: {continuous.size} points, "
        + f"max ceil_remove excess {np.max(ceil_remove / continuous - 1):.6g}, "
        + f"efficient apportionment worse at {worse}, "
        + f"not applicable at {int(np.sum(np.isnan(efficient)))}"
    )
    if verbosity:
        for i in range(continuous.size):
            print(
                f"  nu={table['nu'][i]:.6g} continuous={continuous[i]:.6g} "
                + f"ceil_remove={ceil_remove[i]:.6g} efficient={efficient[i]:.6g}"
            )


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("run", type=Path, help="Output directory of a robust_design run")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    args = parser.parse_args()

    found = False
    for name, reader, summarize in (
        (kDesignFile, read_design, summarize_design),
        (kFrontierFile, read_frontier, summarize_frontier),
        (kCompareFile, read_compare, summarize_compare),
    ):
        path = args.run / name
        if path.is_file():
            found = True
            summarize(reader(path), verbosity=args.verbose)

    if not found:
        print(f"No results found in {args.run}")
        sys.exit(1)


if __name__ == "__main__":
    logging.basicConfig(level=logging.DEBUG)
    main()
