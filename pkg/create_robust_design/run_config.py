# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

import logging
import minimax_design_lib as minimax
import numbers
import numpy as np
import yaml

from collections.abc import Mapping
from dataclasses import dataclass
from minimax_design_lib import criteria
from pathlib import Path

from create_robust_design import settings
from create_robust_design.apportionment import kCeilRemove, kMethods
from create_robust_design.optimizer import OptimizerConfig

log = logging.getLogger("create_robust_design")

kTasks = ("solve", "sweep", "rbb", "rbv", "cmb", "round", "compare")

kCommonKeys = {"task", "space", "model", "optimizer", "output", "workers"}
kScaleKeys = {"sigma2", "tau2", "n"}
kTaskKeys = {
    "solve": {"nu"},
    "sweep": {"grid", "nu_grid"},
    "rbb": {"b2"},
    "rbv": {"s2"},
    "cmb": {"target"},
    "round": {"nu", "method"},
    "compare": {"grid", "nu_grid"},
}
kOptimizerKeys = {"tol", "max_iter", "pseudo_count_start", "prune_below"}

kScaleConsistency = 1e-12


class ConfigException(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    task: str
    space: minimax.DesignSpace
    model: minimax.RegressorSpec
    optimizer: OptimizerConfig
    nu: float = None
    scale: criteria.LossScale = None
    sigma2: float = None
    tau2: float = None
    n: int = None
    b2: float = None
    s2: float = None
    target: float = None
    nu_grid: tuple = None
    method: str = kCeilRemove
    output: Path = None
    workers: int = 1


def _reject_unknown(section, allowed, where):
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigException(f"unknown keys in {where}: {', '.join(unknown)}")


def _mapping(value, where):
    if not isinstance(value, Mapping):
        raise ConfigException(f"{where} must be a mapping, got {value!r}")
    return value


def _number(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ConfigException(f"{name} must be a number, got {value!r}")
    return float(value)


def _boolean(value, name):
    if not isinstance(value, bool):
        raise ConfigException(f"{name} must be true or false, got {value!r}")
    return value


def _integer(value, name, *, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigException(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigException(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def _parse_space(section):
    section = _mapping(section, "space")
    _reject_unknown(section, {"grid", "points"}, "space")
    if ("grid" in section) == ("points" in section):
        raise ConfigException("space needs exactly one of grid or points")

    try:
        if "points" in section:
            return minimax.DesignSpace(section["points"])
        grid = _mapping(section["grid"], "space.grid")
        _reject_unknown(grid, {"bounds", "counts"}, "space.grid")
        missing = sorted({"bounds", "counts"} - set(grid))
        if missing:
            raise ConfigException(f"space.grid is missing {', '.join(missing)}")
        return minimax.build_grid_space(grid["bounds"], grid["counts"])
    except (TypeError, ValueError) as e:
        raise ConfigException(f"invalid space: {e}")


def _parse_model(section, base_dir):
    section = _mapping(section, "model")
    _reject_unknown(section, {"polynomial", "explicit"}, "model")
    if ("polynomial" in section) == ("explicit" in section):
        raise ConfigException("model needs exactly one of polynomial or explicit")

    try:
        if "explicit" in section:
            path = Path(section["explicit"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            return minimax.RegressorSpec.explicit(path)

        polynomial = section["polynomial"]
        if not isinstance(polynomial, Mapping):
            polynomial = {"degree": polynomial}
        _reject_unknown(polynomial, {"degree", "intercept", "interaction"}, "model.polynomial")
        if "degree" not in polynomial:
            raise ConfigException("model.polynomial is missing degree")
        interaction = polynomial.get("interaction")
        return minimax.RegressorSpec.polynomial(
            _integer(polynomial["degree"], "model.polynomial.degree", minimum=0),
            intercept=_boolean(
                polynomial.get("intercept", True), "model.polynomial.intercept"
            ),
            interaction=None
            if interaction is None
            else _integer(interaction, "model.polynomial.interaction"),
        )
    except ValueError as e:
        raise ConfigException(f"invalid model: {e}")


def _parse_optimizer(section):
    section = _mapping(section or {}, "optimizer")
    _reject_unknown(section, kOptimizerKeys, "optimizer")
    values = {}
    if "tol" in section:
        values["tol"] = _number(section["tol"], "optimizer.tol")
    if "max_iter" in section:
        values["max_iter"] = _integer(section["max_iter"], "optimizer.max_iter")
    if "pseudo_count_start" in section:
        values["pseudo_count_start"] = _number(
            section["pseudo_count_start"], "optimizer.pseudo_count_start"
        )
    if "prune_below" in section:
        values["prune_below"] = _number(section["prune_below"], "optimizer.prune_below")
    try:
        return OptimizerConfig(**values)
    except ValueError as e:
        raise ConfigException(f"invalid optimizer settings: {e}")


def _parse_nu_grid(document):
    if "grid" in document and "nu_grid" in document:
        raise ConfigException("give either grid or nu_grid, not both")
    if "nu_grid" in document:
        values = document["nu_grid"]
        if not isinstance(values, list) or not values:
            raise ConfigException(f"nu_grid must be a non-empty list, got {values!r}")
        grid = tuple(_number(value, "nu_grid entry") for value in values)
        if any(not 0 <= nu <= 1 for nu in grid):
            raise ConfigException(f"nu_grid values must lie in [0, 1]: {list(grid)}")
        if any(later < earlier for earlier, later in zip(grid, grid[1:])):
            raise ConfigException(f"nu_grid must be sorted: {list(grid)}")
        return grid
    count = _integer(document.get("grid", settings.NU_GRID_POINTS), "grid", minimum=2)
    return tuple(float(nu) for nu in np.linspace(0.0, 1.0, count))


def _parse_nu(document, task):
    nu = None
    if "nu" in document:
        nu = _number(document["nu"], "nu")
        if not 0 <= nu <= 1:
            raise ConfigException(f"nu must lie in [0, 1], got {nu}")

    has_sigma2, has_tau2 = "sigma2" in document, "tau2" in document
    if has_sigma2 != has_tau2:
        raise ConfigException("sigma2 and tau2 must be given together")
    if has_sigma2:
        try:
            derived = criteria.nu_from_scale(
                _number(document["sigma2"], "sigma2"), _number(document["tau2"], "tau2")
            )
        except ValueError as e:
            raise ConfigException(f"invalid scale: {e}")
        if nu is not None and abs(nu - derived) > kScaleConsistency:
            raise ConfigException(
                f"nu = {nu} contradicts sigma2/tau2, which give nu = {derived}"
            )
        if "nu" in kTaskKeys[task]:
            nu = derived
    return nu


def parse_config(document, *, base_dir=None):
    """Validates a run document (YAML text or an already loaded mapping)."""
    if isinstance(document, str):
        try:
            document = yaml.safe_load(document)
        except yaml.YAMLError as e:
            raise ConfigException(f"malformed configuration: {e}")
    document = _mapping(document, "the configuration")

    task = document.get("task")
    if task not in kTasks:
        raise ConfigException(f"task must be one of {', '.join(kTasks)}, got {task!r}")
    _reject_unknown(document, kCommonKeys | kScaleKeys | kTaskKeys[task], f"task {task}")
    for required in ("space", "model"):
        if required not in document:
            raise ConfigException(f"missing {required}")

    nu = _parse_nu(document, task)
    values = {}
    if task in ("solve", "round") and nu is None:
        raise ConfigException(f"task {task} requires nu or sigma2 and tau2")
    for name, tasks in (("b2", ("rbb",)), ("s2", ("rbv",)), ("target", ("cmb",))):
        if task in tasks:
            if name not in document:
                raise ConfigException(f"task {task} requires {name}")
            values[name] = _number(document[name], name)
    if task in ("round", "compare") and "n" not in document:
        raise ConfigException(f"task {task} requires n")
    if task in ("sweep", "compare"):
        values["nu_grid"] = _parse_nu_grid(document)

    n = None
    if "n" in document:
        n = _integer(document["n"], "n")
    scale = None
    if "sigma2" in document and n is not None:
        scale = criteria.LossScale(
            float(document["sigma2"]), float(document["tau2"]), n
        )

    method = document.get("method", kCeilRemove)
    if method not in kMethods:
        raise ConfigException(f"method must be one of {', '.join(kMethods)}, got {method!r}")

    output = document.get("output")
    config = RunConfig(
        task=task,
        space=_parse_space(document["space"]),
        model=_parse_model(document["model"], base_dir),
        optimizer=_parse_optimizer(document.get("optimizer")),
        nu=nu,
        scale=scale,
        sigma2=float(document["sigma2"]) if "sigma2" in document else None,
        tau2=float(document["tau2"]) if "tau2" in document else None,
        n=n,
        method=method,
        output=None if output is None else Path(output),
        workers=_integer(document.get("workers", 1), "workers"),
        **values,
    )
    log.debug(f"parse_config: {config}")
    return config


def load_config(path):
    path = Path(path)
    try:
        with open(path, "r") as f:
            text = f.read()
    except OSError as e:
        raise ConfigException(f"cannot read configuration {path}: {e}")
    return parse_config(text, base_dir=path.parent)
