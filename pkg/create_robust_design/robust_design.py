#!/usr/bin/env python3

# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

import argparse
import csv
import glog as log
import minimax_design_lib as minimax
import numpy as np
import psutil
import statsd
import sys

from minimax_design_lib import criteria
from pathlib import Path

from create_robust_design import apportionment, optimizer, settings
from create_robust_design.run_config import ConfigException, load_config

kExitSuccess = 0
kExitConfigError = 2
kExitNumericalFailure = 3

kDesignFile = "design.csv"
kFrontierFile = "frontier.csv"
kCompareFile = "compare.csv"

kFrontierColumns = ["nu", "var", "maxbias", "cmb", "loss"]
kExactColumns = ["var_exact", "maxbias_exact", "loss_exact"]
kCompareColumns = [
    "nu",
    "loss_continuous",
    "loss_ceil_remove",
    "loss_efficient_apportionment",
]

metrics = statsd.StatsClient(
    settings.STATSD_HOST, settings.STATSD_PORT, prefix="create_robust_design"
)


def format_float(value):
    return f"{value:.17g}"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [value if isinstance(value, str) else format_float(value) for value in row]
            )
    log.debug(f"Wrote {path} sz={Path(path).stat().st_size}")


def write_design(path, space, xi, *, allocations=None):
    header = ["index"] + [f"x{j + 1}" for j in range(space.q)] + ["weight"]
    if allocations is not None:
        header.append("allocation")
    rows = []
    for i in range(space.N):
        row = [str(i + 1)] + list(space.points[i]) + [xi.weights[i]]
        if allocations is not None:
            row.append(str(int(allocations[i])))
        rows.append(row)
    write_csv(path, header, rows)


def frontier_row(point, scale=None, exact=None):
    row = [point.nu, point.var, point.maxbias, point.cmb, point.loss_value]
    if scale is not None:
        row.append(criteria.imse_scale(point.loss_value, scale))
    if exact is not None:
        row.extend(exact)
    return row


def write_frontier(path, rows, *, scale=None, exact=False):
    header = list(kFrontierColumns)
    if scale is not None:
        header.append("imse")
    if exact:
        header.extend(kExactColumns)
    write_csv(path, header, rows)


def write_compare(path, comparisons):
    write_csv(
        path,
        kCompareColumns,
        [
            [
                c.nu,
                c.loss_continuous,
                c.loss_ceil_remove,
                c.loss_efficient_apportionment,
            ]
            for c in comparisons
        ],
    )


def summary_line(label, point, scale=None, *, extra=""):
    line = (
        f"{label} nu={point.nu:.6g} var={point.var:.6g} "
        + f"maxbias={point.maxbias:.6g} cmb={point.cmb:.6g} loss={point.loss_value:.6g}"
    )
    if scale is not None:
        line += f" imse={criteria.imse_scale(point.loss_value, scale):.6g}"
    return line + extra


@metrics.timer("BuildBasis")
def build_basis(config):
    try:
        F = minimax.evaluate_regressors(config.model, config.space)
    except (OSError, ValueError) as e:
        raise ConfigException(f"cannot evaluate regressors {config.model}: {e}")
    Q = minimax.orthonormalize(F)
    log.info(
        f"Design space N={config.space.N} q={config.space.q}, "
        + f"regressors {F.names} (p={F.p})"
    )
    return F, Q


@metrics.timer("Solve")
def solve(config, Q):
    if config.task in ("solve", "round"):
        point = optimizer.solve_nu(Q, config.nu, config.optimizer)
    elif config.task == "rbb":
        point = optimizer.solve_rbb(Q, config.b2, config.optimizer)
    elif config.task == "rbv":
        point = optimizer.solve_rbv(Q, config.s2, config.optimizer)
    else:
        point = optimizer.find_nu_for_cmb(Q, config.target, config.optimizer)

    if point.trace is not None:
        metrics.gauge("Solve.Iterations", point.trace.iterations)
        metrics.gauge("Solve.Converged", int(point.trace.converged))
    metrics.gauge("Solve.Loss", point.loss_value)
    return point


@metrics.timer("Round")
def round_design(config, Q, point):
    if config.method == apportionment.kEfficientApportionment:
        exact = apportionment.pukelsheim_rieder(point.design, config.n, Q=Q)
    else:
        exact = apportionment.ceil_then_remove(Q, point.design, config.n, point.nu)
    return exact, criteria.evaluate(Q, apportionment.exact_to_measure(exact))


@metrics.timer("Sweep")
def sweep(config, Q, *, progress=False):
    points = optimizer.sweep_frontier(
        Q,
        config.nu_grid,
        config.optimizer,
        workers=config.workers,
        progress=progress and len(config.nu_grid) > 1,
    )
    extremes = optimizer.frontier_extremes(points)
    log.info(f"Frontier extremes: {extremes}")
    metrics.gauge("Sweep.Points", len(points))
    return points


def implement(config, Q, point):
    exact = apportionment.ceil_then_remove(Q, point.design, config.n, point.nu)
    var, bias = criteria.evaluate(Q, apportionment.exact_to_measure(exact))
    return [var, bias, criteria.loss(point.nu, var, bias)]


@metrics.timer("Verify")
def verify(F, Q, designs, *, seed):
    for xi in designs:
        criteria.verify_design(Q, xi, F=F)
    rng = np.random.default_rng(seed)
    checked = 0
    for xi in criteria.random_designs(Q.N, settings.VERIFY_RANDOM_DESIGNS, rng):
        if Q.is_admissible(xi):
            criteria.verify_design(Q, xi, F=F)
            checked += 1
    log.info(
        f"Verified {len(designs)} solution(s) and {checked} random design(s) "
        + f"against the worst-case contaminant oracle. memory={psutil.virtual_memory()}"
    )


def execute(config, out_dir, *, seed, verify_designs, progress):
    F, Q = build_basis(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    checked = []

    if config.task == "sweep":
        points = sweep(config, Q, progress=progress)
        exact_rows = None
        if config.n is not None:
            log.info(f"Implementing every frontier design with n={config.n}")
            exact_rows = [implement(config, Q, point) for point in points]
        rows = [
            frontier_row(
                point, config.scale, None if exact_rows is None else exact_rows[i]
            )
            for i, point in enumerate(points)
        ]
        write_frontier(
            out_dir / kFrontierFile,
            rows,
            scale=config.scale,
            exact=exact_rows is not None,
        )
        checked = [point.design for point in points]
        label = f"task=sweep points={len(points)}"
        print(summary_line(label, points[0], config.scale))
        if len(points) > 1:
            print(summary_line(label, points[-1], config.scale))

    elif config.task == "compare":
        points = sweep(config, Q, progress=progress)
        comparisons = []
        for point in points:
            comparisons.append(
                apportionment.compare_rounding(Q, point.design, config.n, point.nu)
            )
        write_compare(out_dir / kCompareFile, comparisons)
        checked = [point.design for point in points]
        unstable = [
            c.nu
            for c in comparisons
            if c.loss_efficient_apportionment > c.loss_ceil_remove
        ]
        worst = max(c.excess_ceil_remove for c in comparisons)
        label = f"task=compare points={len(comparisons)} n={config.n}"
        print(summary_line(label, points[0], config.scale))
        if len(points) > 1:
            print(summary_line(label, points[-1], config.scale))
        print(
            f"{label} "
            + f"max_excess_ceil_remove={worst:.6g} "
            + f"efficient_apportionment_worse_at={len(unstable)}"
        )

    else:
        point = solve(config, Q)
        allocations, extra = None, ""
        if config.task == "round":
            exact, (var, bias) = round_design(config, Q, point)
            allocations = exact.allocations
            exact_loss = criteria.loss(point.nu, var, bias)
            checked.append(apportionment.exact_to_measure(exact))
            extra = (
                f" n={exact.n} method={exact.method} loss_exact={exact_loss:.6g}"
                + f" excess={(exact_loss - point.loss_value) / point.loss_value:.6g}"
            )
        write_design(out_dir / kDesignFile, config.space, point.design, allocations=allocations)
        write_frontier(
            out_dir / kFrontierFile,
            [frontier_row(point, config.scale)],
            scale=config.scale,
        )
        checked.insert(0, point.design)
        print(summary_line(f"task={config.task}", point, config.scale, extra=extra))

    log.info(f"Outputs written to {out_dir}. memory={psutil.virtual_memory()}")
    if verify_designs:
        verify(F, Q, checked, seed=seed)


def run(config, *, out_dir=None, seed=0, verify=True, progress=False):
    """Runs one configuration, writing its CSV outputs. Returns the exit code."""
    out_dir = Path(out_dir or config.output or settings.OUTPUT_DIR)
    log.info(
        f"StatsD information submitting to {metrics._addr} with prefix {metrics._prefix}."
    )
    try:
        with metrics.timer(f"Task.{config.task}"):
            execute(
                config, out_dir, seed=seed, verify_designs=verify, progress=progress
            )
    except ConfigException as e:
        log.error(f"Configuration error: {e}")
        return kExitConfigError
    except (minimax.DesignException, np.linalg.LinAlgError) as e:
        log.error(f"Numerical failure in task {config.task}: {e}")
        return kExitNumericalFailure
    return kExitSuccess


def parseArgs(argv):
    parser = argparse.ArgumentParser(
        description="Construct robust minimax regression designs on a finite design space."
    )
    parser.add_argument(
        "--config", type=Path, required=True, help="YAML run configuration"
    )
    parser.add_argument(
        "--out",
        type=Path,
        help=f"Output directory. Default: the configuration's output, else "
        + f"{settings.OUTPUT_DIR}",
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=0,
        help="Seed for the random designs used to cross-check the criteria",
    )
    parser.add_argument("--verbose", "-v", help="Be more verbose", action="store_true")
    parser.add_argument(
        "-noVerify", help="Skip the oracle cross-check of the results", action="store_true"
    )
    return parser.parse_args(argv)


def main(argv=None):
    args = parseArgs(sys.argv[1:] if argv is None else argv)
    if args.verbose:
        log.setLevel("DEBUG")
    log.debug(f"robust_design called with arguments: {args}")

    try:
        config = load_config(args.config)
    except ConfigException as e:
        log.error(f"Configuration error in {args.config}: {e}")
        return kExitConfigError

    return run(
        config,
        out_dir=args.out,
        seed=args.seed,
        verify=not args.noVerify,
        progress=args.verbose,
    )


if __name__ == "__main__":
    sys.exit(main())
