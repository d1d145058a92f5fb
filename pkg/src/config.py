"""Run configuration.

Config files use dotenv syntax with dotted keys, one section per prefix:

    problem.tag=heat-hole
    net.width=64
    adam.lr=1e-3
    threads=4
"""

import logging
import os
from typing import Any, Dict, Literal, Mapping, Optional

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigurationError
from .problems import PROBLEM_TAGS, ProblemSpec, build_problem
from .resnet import ACTIVATIONS, NetworkConfig

logger = logging.getLogger(__name__)

THREADS_ENV = "RPDE_THREADS"
LOG_LEVEL_ENV = "RPDE_LOG_LEVEL"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ProblemSection(_Section):
    tag: str = "diffusion-smooth"
    d: Optional[int] = Field(default=None, ge=0)
    constraint: Optional[Literal["hard", "soft"]] = None
    loss: Optional[Literal["strong", "variational"]] = None
    lambda_ic: Optional[float] = Field(default=None, ge=0)
    lambda_bc: Optional[float] = Field(default=None, ge=0)


class NetSection(_Section):
    layers: int = Field(default=6, ge=1)
    width: int = Field(default=64, ge=1)
    block: int = Field(default=2, ge=1)
    activation: str = "tanh"
    seed: int = Field(default=0, ge=0)


class AdamSection(_Section):
    lr: float = Field(default=1e-3, gt=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-15, gt=0)


class TrainSection(_Section):
    optimizer: Literal["adam", "sgd"] = "adam"
    batch: int = Field(default=32, ge=1)
    iterations: int = Field(default=10000, ge=0)
    log_every: int = Field(default=100, ge=1)
    checkpoint_every: int = Field(default=1000, ge=1)
    seed: int = Field(default=0, ge=0)
    patience: int = Field(default=0, ge=0)
    min_delta: float = Field(default=0.0, ge=0)
    loss_tail: int = Field(default=100, ge=0)


class OracleSection(_Section):
    samples: int = Field(default=2000, ge=1)
    nx: int = Field(default=201, ge=3)
    nt: int = Field(default=200, ge=1)
    cells: int = Field(default=128, ge=2)
    seed: int = Field(default=1, ge=0)


class EvaluateSection(_Section):
    samples: int = Field(default=2000, ge=2)
    seed: int = Field(default=2, ge=0)
    pdf_points: int = Field(default=128, ge=2)


class OutputSection(_Section):
    dir: str = "runs/default"


class RunConfig(_Section):
    problem: ProblemSection = ProblemSection()
    net: NetSection = NetSection()
    adam: AdamSection = AdamSection()
    train: TrainSection = TrainSection()
    oracle: OracleSection = OracleSection()
    evaluate: EvaluateSection = EvaluateSection()
    output: OutputSection = OutputSection()
    threads: int = Field(default=1, ge=1)

    def build_problem(self) -> ProblemSpec:
        overrides = self.problem.model_dump(exclude={"tag"})
        return build_problem(self.problem.tag, overrides)

    def network_config(self, problem: ProblemSpec) -> NetworkConfig:
        return NetworkConfig(
            input_dim=problem.input_dim,
            hidden_width=self.net.width,
            num_layers=self.net.layers,
            block_size=self.net.block,
            activation=self.net.activation,
        )

    def validate_choices(self) -> "RunConfig":
        """Cross-field checks pydantic cannot express per field."""
        if self.problem.tag not in PROBLEM_TAGS:
            raise ConfigurationError(f"unknown problem tag '{self.problem.tag}'; expected one of {PROBLEM_TAGS}")
        if self.net.activation not in ACTIVATIONS:
            raise ConfigurationError(f"activation '{self.net.activation}' not supported; use one of {ACTIVATIONS}")
        self.build_problem()
        return self


def nest(flat: Mapping[str, Optional[str]]) -> Dict[str, Any]:
    """Split keys on their first dot into sections."""
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        if value is None or value == "":
            continue
        section, dot, name = key.partition(".")
        if not dot:
            nested[key] = value
            continue
        target = nested.setdefault(section, {})
        if not isinstance(target, dict):
            raise ConfigurationError(f"'{section}' is both a value and a section")
        target[name] = value
    return nested


def parse_config(data: Mapping[str, Any]) -> RunConfig:
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as error:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in issue['loc'])}: {issue['msg']}" for issue in error.errors()
        )
        raise ConfigurationError(f"invalid configuration: {problems}") from None
    return config.validate_choices()


def load_config(path: Optional[str] = None) -> RunConfig:
    """Load and validate a config file; no path gives the defaults."""
    if path is None:
        return parse_config({})
    if not os.path.isfile(path):
        raise ConfigurationError(f"config file not found: {path}")
    flat = dotenv_values(path)
    logger.debug("loaded %d config keys from %s", len(flat), path)
    return parse_config(nest(flat))


def resolve_threads(config: RunConfig, cli_threads: Optional[int] = None) -> int:
    """--threads beats RPDE_THREADS beats the config's `threads`."""
    if cli_threads is not None:
        threads = cli_threads
    elif os.getenv(THREADS_ENV):
        try:
            threads = int(os.environ[THREADS_ENV])
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer, got '{os.environ[THREADS_ENV]}'") from None
    else:
        threads = config.threads
    if threads < 1:
        raise ConfigurationError(f"thread count must be positive, got {threads}")
    return threads
