"""pollwatch — run configuration.

One YAML file describes a run: `attributes`, `simulation`, `polling`, `fraud`,
`detector` and `experiment` blocks. Missing keys take the defaults below;
unknown keys are errors. CLI flags override whatever the file says.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple, Union

from pollwatch.detector import EMBEDDINGS, DetectorParams
from pollwatch.errors import ConfigError, PollwatchError
from pollwatch.fraudinject import FraudMode
from pollwatch.polling import POLL_SCOPES
from pollwatch.popgen import AttributeSchema, DesirabilityPrior, MailInWeights, read_yaml, schema_from_dict
from pollwatch.votecast import ACTIVATIONS, Candidate

BUNDLED_CONFIG = Path(__file__).parent / "data" / "census2000.yaml"


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name, "")
    try:
        return int(raw) if raw else default
    except ValueError:
        return default


CONFIG_PATH = os.environ.get("POLLWATCH_CONFIG", str(BUNDLED_CONFIG))
WORKERS = max(_env_int("POLLWATCH_WORKERS", 1), 1)

TOP_LEVEL = ("attributes", "simulation", "polling", "fraud", "detector", "experiment")


@dataclass(frozen=True)
class SimulationConfig:
    n_regions: int = 250
    pop_size: int = 500_000
    target_share: float = 0.5
    dropout_rate: float = 0.1
    noise_scale: float = 0.25
    noise_halfwidth: Optional[float] = None
    activation: str = "identity"
    sample_fraction: float = 0.3
    cap_factor: float = 1.5
    desirability: DesirabilityPrior = field(default_factory=DesirabilityPrior)
    mail_in_fraction: float = 0.5
    mail_in: MailInWeights = field(default_factory=MailInWeights)


@dataclass(frozen=True)
class PollingConfig:
    rate: float = 0.05
    target_error: float = 0.029
    scope: str = "global"


@dataclass(frozen=True)
class FraudConfig:
    mode: FraudMode = FraudMode.SWITCHING
    regions: int = 10
    probability: float = 0.25
    favored: Candidate = Candidate.A


@dataclass(frozen=True)
class ExperimentConfig:
    levels: Tuple[float, ...] = (5.0, 12.5, 20.0)
    region_fractions: Tuple[float, ...] = (4.0, 10.0, 16.0)
    modes: Tuple[FraudMode, ...] = (FraudMode.SWITCHING,)
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    baseline: bool = False


@dataclass(frozen=True)
class RunConfig:
    path: str
    schema: AttributeSchema
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    polling: PollingConfig = field(default_factory=PollingConfig)
    fraud: FraudConfig = field(default_factory=FraudConfig)
    detector: DetectorParams = field(default_factory=DetectorParams)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def with_overrides(self, section: str, **values: Any) -> "RunConfig":
        """Copy with non-None values replaced in one section."""
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        return replace(self, **{section: replace(getattr(self, section), **values)})

    def to_dict(self) -> Dict[str, Any]:
        sim = asdict(self.simulation)
        sim["desirability"] = {
            "a": self.simulation.desirability.a,
            "b": self.simulation.desirability.b,
            "fixed": self.simulation.desirability.fixed,
        }
        sim["mail_in"] = {
            "weights": {k: dict(v) for k, v in self.simulation.mail_in.weights.items()},
            "bias": self.simulation.mail_in.bias,
        }
        return {
            "config_path": self.path,
            **self.schema.to_dict(),
            "simulation": sim,
            "polling": asdict(self.polling),
            "fraud": {
                "mode": self.fraud.mode.value,
                "regions": self.fraud.regions,
                "probability": self.fraud.probability,
                "favored": self.fraud.favored.value,
            },
            "detector": self.detector.to_dict(),
            "experiment": {
                "levels": list(self.experiment.levels),
                "region_fractions": list(self.experiment.region_fractions),
                "modes": [m.value for m in self.experiment.modes],
                "seeds": list(self.experiment.seeds),
                "baseline": self.experiment.baseline,
            },
        }


# ── Parsing ─────────────────────────────────────────────


def _block(data: Mapping[str, Any], name: str, allowed: Iterable[str]) -> Dict[str, Any]:
    block = data.get(name) or {}
    if not isinstance(block, Mapping):
        raise ConfigError(f"{name}: expected a mapping")
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(f"{name}: unknown keys: {', '.join(unknown)}")
    return dict(block)


def _choice(value: Any, allowed: Iterable[str], where: str) -> str:
    allowed = tuple(allowed)
    if value not in allowed:
        raise ConfigError(f"{where}: {value!r} is not one of {', '.join(allowed)}")
    return value


def _enum(enum_cls, value: Any, where: str):
    try:
        return enum_cls(value)
    except ValueError:
        options = ", ".join(m.value for m in enum_cls)
        raise ConfigError(f"{where}: {value!r} is not one of {options}") from None


def _simulation(data: Mapping[str, Any]) -> SimulationConfig:
    block = _block(
        data,
        "simulation",
        (
            "n_regions", "pop_size", "target_share", "dropout_rate", "noise_scale",
            "noise_halfwidth", "activation", "redistribution", "desirability", "mail_in",
        ),
    )
    redist = _block(block, "redistribution", ("sample_fraction", "cap_factor"))
    desir = _block(block, "desirability", ("a", "b", "fixed"))
    mail = _block(block, "mail_in", ("sample_fraction", "bias", "weights"))
    d = SimulationConfig()
    halfwidth = block.get("noise_halfwidth", d.noise_halfwidth)
    return SimulationConfig(
        n_regions=int(block.get("n_regions", d.n_regions)),
        pop_size=int(block.get("pop_size", d.pop_size)),
        target_share=float(block.get("target_share", d.target_share)),
        dropout_rate=float(block.get("dropout_rate", d.dropout_rate)),
        noise_scale=float(block.get("noise_scale", d.noise_scale)),
        noise_halfwidth=None if halfwidth is None else float(halfwidth),
        activation=_choice(block.get("activation", d.activation), ACTIVATIONS, "simulation.activation"),
        sample_fraction=float(redist.get("sample_fraction", d.sample_fraction)),
        cap_factor=float(redist.get("cap_factor", d.cap_factor)),
        desirability=DesirabilityPrior(
            a=float(desir.get("a", 1.0)),
            b=float(desir.get("b", 1.0)),
            fixed=None if desir.get("fixed") is None else float(desir["fixed"]),
        ),
        mail_in_fraction=float(mail.get("sample_fraction", d.mail_in_fraction)),
        mail_in=MailInWeights(
            weights={
                str(attr): {str(label): float(w) for label, w in (labels or {}).items()}
                for attr, labels in (mail.get("weights") or {}).items()
            },
            bias=float(mail.get("bias", 0.0)),
        ),
    )


def _polling(data: Mapping[str, Any]) -> PollingConfig:
    block = _block(data, "polling", ("rate", "target_error", "scope"))
    d = PollingConfig()
    return PollingConfig(
        rate=float(block.get("rate", d.rate)),
        target_error=float(block.get("target_error", d.target_error)),
        scope=_choice(block.get("scope", d.scope), POLL_SCOPES, "polling.scope"),
    )


def _fraud(data: Mapping[str, Any]) -> FraudConfig:
    block = _block(data, "fraud", ("mode", "regions", "probability", "favored"))
    d = FraudConfig()
    return FraudConfig(
        mode=_enum(FraudMode, block.get("mode", d.mode.value), "fraud.mode"),
        regions=int(block.get("regions", d.regions)),
        probability=float(block.get("probability", d.probability)),
        favored=_enum(Candidate, block.get("favored", d.favored.value), "fraud.favored"),
    )


def _detector(data: Mapping[str, Any]) -> DetectorParams:
    block = _block(
        data,
        "detector",
        ("nu", "gamma", "k", "k_range", "restarts", "embedding", "per_cluster_regression", "min_cluster_size"),
    )
    d = DetectorParams()
    k_range = tuple(int(v) for v in block.get("k_range", d.k_range))
    if len(k_range) != 2 or k_range[0] > k_range[1]:
        raise ConfigError("detector.k_range: expected [low, high]")
    return DetectorParams(
        nu=float(block.get("nu", d.nu)),
        gamma=None if block.get("gamma") is None else float(block["gamma"]),
        k=None if block.get("k") is None else int(block["k"]),
        k_range=(k_range[0], k_range[1]),
        restarts=int(block.get("restarts", d.restarts)),
        embedding=_choice(block.get("embedding", d.embedding), EMBEDDINGS, "detector.embedding"),
        per_cluster_regression=bool(block.get("per_cluster_regression", d.per_cluster_regression)),
        min_cluster_size=int(block.get("min_cluster_size", d.min_cluster_size)),
        workers=WORKERS,
    )


def _experiment(data: Mapping[str, Any]) -> ExperimentConfig:
    block = _block(data, "experiment", ("levels", "region_fractions", "modes", "seeds", "baseline"))
    d = ExperimentConfig()
    seeds = block.get("seeds", d.seeds)
    if isinstance(seeds, int):
        seeds = range(seeds)
    return ExperimentConfig(
        levels=tuple(float(v) for v in block.get("levels", d.levels)),
        region_fractions=tuple(float(v) for v in block.get("region_fractions", d.region_fractions)),
        modes=tuple(_enum(FraudMode, m, "experiment.modes") for m in block.get("modes", [m.value for m in d.modes])),
        seeds=tuple(int(s) for s in seeds),
        baseline=bool(block.get("baseline", d.baseline)),
    )


def config_from_dict(data: Mapping[str, Any], path: str = "<memory>") -> RunConfig:
    unknown = sorted(set(data) - set(TOP_LEVEL))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        return RunConfig(
            path=path,
            schema=schema_from_dict(data),
            simulation=_simulation(data),
            polling=_polling(data),
            fraud=_fraud(data),
            detector=_detector(data),
            experiment=_experiment(data),
        )
    except PollwatchError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """Read a run config; with no path, POLLWATCH_CONFIG or the bundled census config."""
    path = str(path or CONFIG_PATH)
    return config_from_dict(read_yaml(path), path)
