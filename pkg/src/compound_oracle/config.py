"""Experiment configuration: YAML file -> validated :class:`ExperimentConfig`.

The schema lives in ``config_schema.json`` next to this module and is
documented in ``docs/config.md``. Validation happens before any computation;
engine capacity is checked against the largest requested ``n``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from .errors import ConfigError, DomainError
from .families import Family
from .oracles import engine_capacity
from .risklab import MuGenerator

CHECKS = ("G1", "G2", "B1", "two-valued")


def load_schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("config_schema.json").read_text())


@dataclass
class ExperimentConfig:
    family: Family
    generator: MuGenerator
    n_grid: list[int]
    engine: str | None
    reps: int
    seed: int
    checks: list[str] = field(default_factory=lambda: list(CHECKS))
    gamma: float = 0.1
    two_valued: tuple[float, float] | None = None
    output_path: str | None = None
    output_format: str = "csv"
    source: str | None = None

    def canonical(self) -> dict:
        """Everything that determines the numbers, in a platform-stable form."""
        d = {
            "family": self.family.to_dict(),
            "mus": {"kind": self.generator.kind, **self.generator.params},
            "n_grid": self.n_grid,
            "reps": self.reps,
            "seed": self.seed,
        }
        if self.engine is not None:
            d["engine"] = self.engine
        else:
            d["checks"] = self.checks
            d["gamma"] = self.gamma
            if self.two_valued is not None:
                d["two_valued"] = list(self.two_valued)
        return d

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _schema_errors(raw) -> list[str]:
    v = jsonschema.Draft202012Validator(load_schema())
    return [f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in sorted(v.iter_errors(raw), key=str)]


def parse_config(raw: dict, command: str, seed: int | None = None, source: str | None = None) -> ExperimentConfig:
    """Validate a decoded config for ``command`` (``gap`` or ``check``).

    Raises ConfigError with every schema diagnostic, or CapacityError when the
    engine cannot cover the requested sizes.
    """
    errors = _schema_errors(raw)
    if errors:
        raise ConfigError("invalid config:\n  " + "\n  ".join(errors))
    fam = raw["family"]
    try:
        family = Family(fam["kind"], base=fam.get("base"), points=tuple(fam["points"]) if "points" in fam else None)
    except (ConfigError, DomainError, ValueError) as exc:
        raise ConfigError(f"family: {exc}") from None
    mus = dict(raw["mus"])
    generator = MuGenerator(mus.pop("kind"), mus)
    if "n_grid" in raw:
        n_grid = [int(n) for n in raw["n_grid"]]
    elif "n" in raw:
        n_grid = [int(raw["n"])]
    elif generator.kind == "explicit":
        n_grid = [len(generator.params["values"])]
    else:
        raise ConfigError("config needs n or n_grid")
    if generator.kind == "explicit" and any(n != len(generator.params["values"]) for n in n_grid):
        raise ConfigError("explicit mus: every n must equal the number of listed values")
    out = raw.get("output", {})
    cfg = ExperimentConfig(
        family=family,
        generator=generator,
        n_grid=n_grid,
        engine=raw.get("engine"),
        reps=int(raw["reps"]),
        seed=int(raw["seed"] if seed is None else seed),
        checks=list(raw.get("checks", CHECKS)),
        gamma=float(raw.get("gamma", 0.1)),
        two_valued=tuple(raw["two_valued"][k] for k in ("mu0", "mu1")) if "two_valued" in raw else None,
        output_path=out.get("path"),
        output_format=out.get("format", "csv"),
        source=source,
    )
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if command == "gap":
        if cfg.engine is None:
            raise ConfigError("gap config needs an engine")
        if cfg.engine == "two-valued":
            bound = generator.distinct_bound()
            if bound is None or bound > 2:
                raise ConfigError("two-valued engine needs a multiset with at most two distinct values")
        # capacity problems surface here, before any computation
        for n in n_grid:
            engine_capacity(cfg.engine, n)
    elif command == "check":
        if len(n_grid) != 1:
            raise ConfigError("check config takes a single n")
        if "two-valued" in cfg.checks and cfg.two_valued is None and generator.distinct_bound() not in (1, 2):
            raise ConfigError("two-valued check needs two_valued: {mu0, mu1} or a two-valued multiset")
    if generator.kind == "explicit":
        try:
            family.check(generator.params["values"])
        except DomainError as exc:
            raise ConfigError(f"mus: {exc}") from None
    elif generator.kind in ("two-valued", "constant"):
        try:
            family.check([v for k, v in generator.params.items() if k in ("mu0", "mu1", "value")])
        except DomainError as exc:
            raise ConfigError(f"mus: {exc}") from None
    elif family.kind != "gaussian-location":
        raise ConfigError("iid-uniform multisets are only admissible for the gaussian-location family")
    return cfg


def load_config(path: str | Path, command: str, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return parse_config(raw, command, seed=seed, source=str(path))
