"""Run configuration: a JSON file plus command-line overrides."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .priors import NIG, PriorSpec
from .sampler import ChainConfig
from .summaries import LOSSES

CONFIG_SCHEMA = "bayestage.config/1"


class ValidationError(ValueError):
    """Bad configuration or data; maps to exit code 2."""


class NumericError(ArithmeticError):
    """Non-finite quantities during fitting; maps to exit code 4."""


@dataclass
class RunConfig:
    data: str = ""
    ordering: List[str] = field(default_factory=list)
    modeled: List[str] = field(default_factory=list)
    treatment: Optional[str] = None
    outcome: Optional[str] = None
    treated_level: Optional[str] = None
    outcome_level: Optional[str] = None
    covariates: List[str] = field(default_factory=list)
    levels: Dict[str, List[str]] = field(default_factory=dict)
    # prior
    kappa: float = 1.0
    xi: float = 0.25
    lambdas: List[float] = field(default_factory=list)
    a: float = 1.0
    nig: List[float] = field(default_factory=lambda: [0.0, 1.0, 1.0, 1.0])
    # chain
    iterations: int = 10000
    burn_in: int = 1000
    thin: int = 5
    seed: int = 0
    init: str = "singletons"
    # summaries and effects
    loss: str = "VI"
    level: float = 0.95
    restarts: int = 16
    theta_mode: str = "mean"
    write_draws: bool = False
    # plumbing
    out: str = "bayestage-out"
    workers: int = 1
    backend: Optional[str] = None

    def validate(self) -> "RunConfig":
        if not self.data:
            raise ValidationError("no dataset path given")
        if len(self.ordering) < 1:
            raise ValidationError("the variable ordering is empty")
        if len(set(self.ordering)) != len(self.ordering):
            raise ValidationError("the variable ordering repeats a column")
        if not self.modeled:
            self.modeled = list(self.ordering[-2:]) if len(self.ordering) > 1 else list(self.ordering)
        for name in self.modeled:
            if name not in self.ordering:
                raise ValidationError(f"modeled variable {name!r} is not in the ordering")
        for role in ("treatment", "outcome"):
            v = getattr(self, role)
            if v is not None and v not in self.ordering:
                raise ValidationError(f"{role} {v!r} is not in the ordering")
        if (self.treatment is None) != (self.outcome is None):
            raise ValidationError("give both a treatment and an outcome, or neither")
        if self.covariates and not self.lambdas:
            self.lambdas = [1.0] * len(self.covariates)
        if len(self.lambdas) != len(self.covariates):
            raise ValidationError(f"{len(self.covariates)} covariates but {len(self.lambdas)} weights")
        if self.loss not in LOSSES:
            raise ValidationError(f"loss must be one of {LOSSES}")
        if not 0 < self.level <= 1:
            raise ValidationError("credible level must lie in (0, 1]")
        if self.theta_mode not in ("mean", "draw"):
            raise ValidationError("theta_mode must be 'mean' or 'draw'")
        if self.restarts < 1 or self.workers < 1:
            raise ValidationError("restarts and workers must be >= 1")
        if len(self.nig) != 4:
            raise ValidationError("nig takes four values: m0 kappa0 alpha0 beta0")
        try:
            self.prior_spec()
            self.chain_config()
        except ValueError as e:
            raise ValidationError(str(e)) from None
        return self

    def prior_spec(self) -> PriorSpec:
        return PriorSpec(kappa=self.kappa, xi=self.xi, lambdas=tuple(self.lambdas), a=self.a, nig=NIG(*self.nig))

    def chain_config(self) -> ChainConfig:
        return ChainConfig(self.iterations, self.burn_in, self.thin, self.seed, self.init)

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["schema"] = CONFIG_SCHEMA
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        obj = dict(obj)
        schema = obj.pop("schema", CONFIG_SCHEMA)
        if schema != CONFIG_SCHEMA:
            raise ValidationError(f"unsupported config schema {schema!r}")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as e:
                raise ValidationError(f"{path}: {e}") from None
        return cls.from_json(obj)

    def digest(self) -> str:
        """Hash of everything that affects results (output location and worker count excluded)."""
        d = self.to_json()
        for k in ("out", "workers", "backend"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]
