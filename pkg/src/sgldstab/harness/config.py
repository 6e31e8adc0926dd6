"""Experiment configuration: a strict JSON schema mapped onto a dataclass."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..core import LossModel, make_loss
from ..couplings import CouplingConfig
from ..dynamics import InitialSpec, SgldConfig

EXPERIMENTS = ("stability", "generalization", "contraction", "discretization", "verify")
FORMATS = ("json", "csv")


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


def _strict(cls, raw: dict, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return cls(**raw)


@dataclass
class LossSpec:
    family: str = "quadratic"
    params: dict = field(default_factory=dict)
    z_max: float = 1.0
    constants: dict = field(default_factory=dict)

    def build(self, d: int, lam: float) -> LossModel:
        try:
            model = make_loss(self.family, d, z_max=self.z_max, lam=lam, **self.params)
        except TypeError as exc:
            raise ConfigError(f"bad parameters for {self.family}: {exc}") from None
        if self.constants:
            bad = set(self.constants) - {"L", "M", "m", "b"}
            if bad:
                raise ConfigError(f"unknown constant override(s): {sorted(bad)}")
            model = model.with_constants(**self.constants)
        return model


@dataclass
class InitialConfig:
    x0: float | list = 0.0
    sigma0: float = 0.0

    def spec(self) -> InitialSpec:
        x0 = tuple(self.x0) if isinstance(self.x0, list) else float(self.x0)
        return InitialSpec(x0, float(self.sigma0))


@dataclass
class CouplingSpec:
    mode: str = "hybrid"
    meet_threshold: float | None = None
    bridge: bool = True
    force_in_batch: bool = False


@dataclass
class ExperimentConfig:
    """Everything an experiment needs; JSON keys match the field names except
    ``lambda`` (stored as ``lam``)."""

    experiment: str
    loss: LossSpec = field(default_factory=LossSpec)
    n: int = 64
    k: int = 8
    d: int = 2
    eta: float = 0.05
    beta: float = 1.0
    lam: float = 0.0
    horizon: int = 1000
    replicas: int = 500
    seed: int = 0
    variant: str = "plain"
    projection_radius: float | None = None
    sigma: list | None = None
    t_sub: int | None = None
    substeps_cts: int = 64
    continuous: bool = False
    n_list: list = field(default_factory=list)
    eta_list: list = field(default_factory=list)
    initial: InitialConfig = field(default_factory=InitialConfig)
    initial_b: InitialConfig = field(default_factory=lambda: InitialConfig(x0=1.0))
    coupling: CouplingSpec = field(default_factory=CouplingSpec)
    reference_substeps: int = 1024
    samples: int = 256
    population_samples: int = 10000
    record_every: int = 1
    probes: int = 20000
    full_batch_control: bool = True
    format: str = "json"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}")
        for name in ("n", "k", "d", "replicas", "substeps_cts", "reference_substeps",
                     "samples", "population_samples", "record_every", "probes"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not isinstance(self.horizon, int) or self.horizon < 0:
            raise ConfigError("horizon must be a non-negative integer")
        if self.k > self.n:
            raise ConfigError(f"batch size k={self.k} exceeds n={self.n}")
        if not (self.eta > 0 and self.beta > 0 and self.lam >= 0):
            raise ConfigError("need eta > 0, beta > 0 and lambda >= 0")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.experiment == "discretization" and len(self.eta_list) < 3:
            raise ConfigError("discretization needs eta_list with at least 3 values")
        if self.experiment == "discretization" and self.reference_substeps < 1024:
            raise ConfigError("reference_substeps must be at least 1024")
        if self.samples > 256 and self.experiment == "discretization":
            raise ConfigError("the exact transport oracle is limited to 256 samples")
        if any(self.k > n for n in self.n_list):
            raise ConfigError("every n in n_list must be at least k")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        raw = dict(raw)
        if "lambda" in raw:
            if "lam" in raw:
                raise ConfigError("give either 'lambda' or 'lam', not both")
            raw["lam"] = raw.pop("lambda")
        if "experiment" not in raw:
            raise ConfigError("config needs an 'experiment' key")
        nested = {"loss": LossSpec, "initial": InitialConfig, "initial_b": InitialConfig,
                  "coupling": CouplingSpec}
        for key, cls_ in nested.items():
            if key in raw:
                raw[key] = _strict(cls_, raw[key], key)
        try:
            return _strict(cls, raw, "config")
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return out

    def model(self) -> LossModel:
        try:
            return self.loss.build(self.d, self.lam)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def sgld(self, k: int | None = None, eta: float | None = None) -> SgldConfig:
        try:
            return SgldConfig(eta=self.eta if eta is None else eta, beta=self.beta,
                              k=self.k if k is None else k, lam=self.lam, variant=self.variant,
                              radius=self.projection_radius,
                              sigma=None if self.sigma is None else np.asarray(self.sigma),
                              t_sub=self.t_sub, substeps_cts=self.substeps_cts)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def coupling_config(self, mode: str | None = None, force_index: int | None = None
                        ) -> CouplingConfig:
        try:
            return CouplingConfig(mode or self.coupling.mode, self.coupling.meet_threshold,
                                  bridge=self.coupling.bridge, force_index=force_index)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
