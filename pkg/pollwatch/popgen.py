"""pollwatch — synthetic voting populations.

Individuals are stored column-wise on a Population: one row of category codes
per person, plus a region id and a mail-in flag. Region, Individual and
DemographicProfile are views built from those arrays on demand.

Pipeline: generate_population -> assign_desirability -> redistribute ->
assign_mail_in. Each step returns a new Population.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from scipy import stats
from scipy.special import expit

from pollwatch.errors import PopulationError, SchemaError
from pollwatch.streams import DESIRABILITY, GENERATE, MAIL_IN, REDISTRIBUTE, substream

log = logging.getLogger(__name__)

CATEGORICAL = "categorical"
BINNED = "binned"
PROB_TOL = 1e-9


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


# ── Schema ──────────────────────────────────────────────


@dataclass(frozen=True)
class AttributeDef:
    """One voter attribute.

    Categorical attributes carry `probabilities`; binned attributes carry a
    Gaussian (`mean`, `std`) whose draws are cut at `edges` into
    len(edges) + 1 categories. Bin i holds values in [edges[i-1], edges[i]).
    """

    name: str
    kind: str
    categories: Tuple[str, ...]
    probabilities: Tuple[float, ...] = ()
    edges: Tuple[float, ...] = ()
    mean: float = 0.0
    std: float = 1.0

    @property
    def size(self) -> int:
        return len(self.categories)

    def bin(self, values: np.ndarray) -> np.ndarray:
        return np.searchsorted(np.asarray(self.edges, dtype=float), values, side="right").astype(
            np.int16
        )

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == CATEGORICAL:
            return rng.choice(self.size, size=n, p=np.asarray(self.probabilities)).astype(np.int16)
        return self.bin(rng.normal(self.mean, self.std, size=n))

    def expected_shares(self) -> np.ndarray:
        """Category probabilities implied by the definition."""
        if self.kind == CATEGORICAL:
            return np.asarray(self.probabilities, dtype=float)
        cdf = stats.norm.cdf(np.asarray(self.edges, dtype=float), loc=self.mean, scale=self.std)
        return np.diff(np.concatenate([[0.0], cdf, [1.0]]))

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"name": self.name, "kind": self.kind, "categories": list(self.categories)}
        if self.kind == CATEGORICAL:
            out["probabilities"] = list(self.probabilities)
        else:
            out.update(mean=self.mean, std=self.std, edges=list(self.edges))
        return out


@dataclass(frozen=True)
class AttributeSchema:
    attributes: Tuple[AttributeDef, ...]

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(a.size for a in self.attributes)

    @property
    def n_features(self) -> int:
        """Width of the one-hot encoding."""
        return sum(self.sizes)

    @property
    def offsets(self) -> np.ndarray:
        """Start column of each attribute inside the one-hot encoding."""
        return np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(np.int64)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"unknown attribute: {name}") from None

    def to_dict(self) -> Dict[str, Any]:
        return {"attributes": [a.to_dict() for a in self.attributes]}


def _attribute_from_dict(block: Mapping[str, Any]) -> AttributeDef:
    name = str(block.get("name", "")).strip()
    if not name:
        raise SchemaError("attribute without a name")
    kind = str(block.get("kind", CATEGORICAL))
    categories = tuple(str(c) for c in block.get("categories") or ())
    if not categories:
        raise SchemaError(f"{name}: no categories")
    if len(set(categories)) != len(categories):
        raise SchemaError(f"{name}: duplicate category labels")

    if kind == CATEGORICAL:
        probs = tuple(float(p) for p in block.get("probabilities") or ())
        if len(probs) != len(categories):
            raise SchemaError(
                f"{name}: {len(categories)} categories but {len(probs)} probabilities"
            )
        if any(p < 0 or not math.isfinite(p) for p in probs):
            raise SchemaError(f"{name}: probabilities must be finite and non-negative")
        total = math.fsum(probs)
        if abs(total - 1.0) > PROB_TOL:
            raise SchemaError(f"{name}: probabilities sum to {total:.12g}, not 1")
        return AttributeDef(name, kind, categories, probabilities=probs)

    if kind == BINNED:
        edges = tuple(float(e) for e in block.get("edges") or ())
        if len(edges) != len(categories) - 1:
            raise SchemaError(f"{name}: {len(categories)} categories need {len(categories) - 1} edges")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise SchemaError(f"{name}: bin edges must be strictly increasing")
        try:
            mean, std = float(block["mean"]), float(block["std"])
        except (KeyError, TypeError, ValueError):
            raise SchemaError(f"{name}: binned attributes need numeric mean and std") from None
        if not std > 0:
            raise SchemaError(f"{name}: std must be positive")
        return AttributeDef(name, kind, categories, edges=edges, mean=mean, std=std)

    raise SchemaError(f"{name}: unknown kind {kind!r} (expected categorical or binned)")


def schema_from_dict(data: Mapping[str, Any]) -> AttributeSchema:
    blocks = data.get("attributes") if isinstance(data, Mapping) else None
    if not blocks:
        raise SchemaError("config defines no attributes")
    attributes = tuple(_attribute_from_dict(b) for b in blocks)
    names = [a.name for a in attributes]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise SchemaError(f"duplicate attribute names: {', '.join(dupes)}")
    return AttributeSchema(attributes)


def read_yaml(config_path: Union[str, Path]) -> Dict[str, Any]:
    try:
        text = Path(config_path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read {config_path}: {exc.strerror or exc}") from None
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise SchemaError(f"cannot parse {config_path}: {exc}") from None
    if not isinstance(data, dict):
        raise SchemaError(f"{config_path}: top level must be a mapping")
    return data


def load_schema(config_path: Union[str, Path]) -> AttributeSchema:
    """Read and validate the `attributes:` block of a YAML config."""
    return schema_from_dict(read_yaml(config_path))


# ── Population types ────────────────────────────────────


@dataclass(frozen=True)
class Individual:
    codes: Tuple[int, ...]
    mail_in: bool
    region_id: int


@dataclass(frozen=True, eq=False)
class DemographicProfile:
    """Per-attribute marginal category fractions of one region."""

    schema: AttributeSchema
    fractions: Tuple[np.ndarray, ...]

    def as_dict(self) -> Dict[str, Dict[str, float]]:
        return {
            attr.name: dict(zip(attr.categories, map(float, frac)))
            for attr, frac in zip(self.schema.attributes, self.fractions)
        }


@dataclass(frozen=True, eq=False)
class Region:
    region_id: int
    schema: AttributeSchema
    codes: np.ndarray
    mail_in: np.ndarray
    desirability: Optional[Tuple[np.ndarray, ...]] = None

    @property
    def size(self) -> int:
        return int(self.codes.shape[0])

    @property
    def individuals(self) -> List[Individual]:
        return [
            Individual(tuple(int(c) for c in row), bool(m), self.region_id)
            for row, m in zip(self.codes, self.mail_in)
        ]


@dataclass(frozen=True, eq=False)
class Population:
    """All individuals of one simulated electorate.

    `codes[i, a]` is person i's category index for attribute a;
    `desirability[a]` has shape (n_regions, categories of a).
    """

    schema: AttributeSchema
    codes: np.ndarray
    region_ids: np.ndarray
    mail_in: np.ndarray
    n_regions: int
    seed: int
    desirability: Optional[Tuple[np.ndarray, ...]] = None
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for arr in (self.codes, self.region_ids, self.mail_in):
            _frozen(arr)
        for table in self.desirability or ():
            _frozen(table)

    @property
    def size(self) -> int:
        return int(self.region_ids.shape[0])

    @property
    def region_sizes(self) -> np.ndarray:
        return np.bincount(self.region_ids, minlength=self.n_regions)

    def members(self) -> List[np.ndarray]:
        """Individual indices per region, ascending."""
        order = np.argsort(self.region_ids, kind="stable")
        bounds = np.cumsum(self.region_sizes)[:-1]
        return np.split(order, bounds)

    def region(self, region_id: int) -> Region:
        if not 0 <= region_id < self.n_regions:
            raise PopulationError(f"region {region_id} out of range [0, {self.n_regions})")
        idx = np.flatnonzero(self.region_ids == region_id)
        table = None
        if self.desirability is not None:
            table = tuple(t[region_id] for t in self.desirability)
        return Region(region_id, self.schema, self.codes[idx], self.mail_in[idx], table)

    @property
    def regions(self) -> List[Region]:
        return [self.region(r) for r in range(self.n_regions)]

    def individual(self, index: int) -> Individual:
        return Individual(
            tuple(int(c) for c in self.codes[index]),
            bool(self.mail_in[index]),
            int(self.region_ids[index]),
        )


# ── Generation ──────────────────────────────────────────


def generate_population(
    schema: AttributeSchema, n_regions: int, pop_size: int, seed: int
) -> Population:
    """Draw pop_size individuals, split evenly (±1) across n_regions."""
    if n_regions < 1:
        raise PopulationError("need at least one region")
    if pop_size < 1:
        raise PopulationError("population size must be positive")
    if pop_size < n_regions:
        raise PopulationError(f"population {pop_size} is smaller than {n_regions} regions")

    base, extra = divmod(pop_size, n_regions)
    sizes = np.full(n_regions, base, dtype=np.int64)
    sizes[:extra] += 1

    blocks = []
    for r in range(n_regions):
        rng = substream(seed, GENERATE, r)
        blocks.append(np.column_stack([a.sample(rng, int(sizes[r])) for a in schema.attributes]))
    codes = np.vstack(blocks).astype(np.int16)
    region_ids = np.repeat(np.arange(n_regions, dtype=np.int64), sizes)
    return Population(
        schema=schema,
        codes=codes,
        region_ids=region_ids,
        mail_in=np.zeros(pop_size, dtype=bool),
        n_regions=n_regions,
        seed=seed,
        params={"n_regions": n_regions, "pop_size": pop_size, "seed": seed},
    )


# ── Desirability & redistribution ───────────────────────


@dataclass(frozen=True)
class DesirabilityPrior:
    """Beta(a, b) prior per region and category.

    `fixed` replaces the prior with a point mass. `overrides` maps
    (region_id, attribute, category label) to its own (a, b).
    """

    a: float = 1.0
    b: float = 1.0
    fixed: Optional[float] = None
    overrides: Mapping[Tuple[int, str, str], Tuple[float, float]] = field(default_factory=dict)

    def validate(self) -> None:
        if self.fixed is not None:
            if not 0.0 <= self.fixed <= 1.0:
                raise PopulationError(f"fixed desirability {self.fixed} outside [0, 1]")
            return
        pairs = [(self.a, self.b), *self.overrides.values()]
        if any(not (a > 0 and b > 0) for a, b in pairs):
            raise PopulationError("Beta prior parameters must be positive")


def assign_desirability(
    population: Population, prior: DesirabilityPrior, seed: int
) -> Population:
    prior.validate()
    schema = population.schema
    tables = [np.empty((population.n_regions, a.size)) for a in schema.attributes]
    overrides = sorted(prior.overrides.items())
    for key, _ in overrides:
        region_id, attr, label = key
        if not 0 <= region_id < population.n_regions:
            raise PopulationError(f"desirability override for unknown region {region_id}")
        if label not in schema.attributes[schema.index(attr)].categories:
            raise PopulationError(f"desirability override for unknown category {attr}={label}")

    for r in range(population.n_regions):
        rng = substream(seed, DESIRABILITY, r)
        for table, attr in zip(tables, schema.attributes):
            if prior.fixed is not None:
                table[r] = prior.fixed
            else:
                table[r] = rng.beta(prior.a, prior.b, size=attr.size)
        if prior.fixed is None:
            for (region_id, attr_name, label), (a, b) in overrides:
                if region_id == r:
                    i = schema.index(attr_name)
                    table = tables[i]
                    table[r, schema.attributes[i].categories.index(label)] = rng.beta(a, b)

    return replace(population, desirability=tuple(tables))


def desirability_scores(desirability: Sequence[np.ndarray], codes: np.ndarray) -> np.ndarray:
    """Score of every region for each person: product of per-attribute desirabilities.

    Returns shape (len(codes), n_regions).
    """
    scores = np.ones((codes.shape[0], desirability[0].shape[0]))
    for a, table in enumerate(desirability):
        scores *= table[:, codes[:, a]].T
    return scores


def redistribute(
    population: Population, sample_fraction: float, cap_factor: float, seed: int
) -> Population:
    """Relocate a sampled share of each region toward desirable regions.

    Samples are drawn from the pre-move membership of every region, then
    relocated region by region in id order. A region takes a newcomer only
    while its size stays within cap_factor × mean region size.
    """
    if not 0.0 <= sample_fraction <= 1.0:
        raise PopulationError(f"sample_fraction {sample_fraction} outside [0, 1]")
    if cap_factor < 1.0:
        raise PopulationError(f"cap_factor {cap_factor} must be at least 1")
    if population.desirability is None:
        raise PopulationError("assign desirability before redistributing")
    if sample_fraction == 0.0:
        return population

    n_regions = population.n_regions
    cap = cap_factor * population.size / n_regions
    sizes = population.region_sizes.astype(np.int64)
    moved_to = population.region_ids.copy()

    samples = []
    for r, members in enumerate(population.members()):
        rng = substream(seed, REDISTRIBUTE, r)
        m = int(round(sample_fraction * members.size))
        chosen = np.sort(rng.choice(members, size=m, replace=False)) if m else members[:0]
        samples.append((rng, chosen))

    moves = 0
    for origin, (rng, chosen) in enumerate(samples):
        if chosen.size == 0:
            continue
        scores = desirability_scores(population.desirability, population.codes[chosen])
        draws = rng.random(chosen.size)
        for person, score, u in zip(chosen, scores, draws):
            eligible = sizes + 1 <= cap
            eligible[origin] = True
            weights = np.where(eligible, score, 0.0)
            cdf = np.cumsum(weights)
            total = cdf[-1]
            if total <= 0.0:
                continue
            dest = min(int(np.searchsorted(cdf, u * total, side="right")), n_regions - 1)
            if dest != origin:
                sizes[origin] -= 1
                sizes[dest] += 1
                moved_to[person] = dest
                moves += 1

    empty = np.flatnonzero(sizes == 0)
    if empty.size:
        raise PopulationError(f"redistribution emptied regions: {empty.tolist()}")
    log.debug("redistribution moved %d of %d individuals", moves, population.size)
    params = {**population.params, "sample_fraction": sample_fraction, "cap_factor": cap_factor}
    return replace(population, region_ids=moved_to, params=params)


# ── Mail-in ─────────────────────────────────────────────


@dataclass(frozen=True)
class MailInWeights:
    """Logistic mail-in preference: weights[attribute][category] plus bias."""

    weights: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    bias: float = 0.0

    def vector(self, schema: AttributeSchema) -> np.ndarray:
        w = np.zeros(schema.n_features)
        for attr_name, per_label in self.weights.items():
            i = schema.index(attr_name)
            attr = schema.attributes[i]
            for label, value in per_label.items():
                if label not in attr.categories:
                    raise SchemaError(f"mail-in weight for unknown category {attr_name}={label}")
                w[schema.offsets[i] + attr.categories.index(label)] = float(value)
        return w


def assign_mail_in(
    population: Population, sample_fraction: float, weights: MailInWeights, seed: int
) -> Population:
    """Sample a share of each region; each sampled person votes by mail with
    probability logistic(w·x + bias)."""
    if not 0.0 <= sample_fraction <= 1.0:
        raise PopulationError(f"mail-in sample_fraction {sample_fraction} outside [0, 1]")
    w = weights.vector(population.schema)
    offsets = population.schema.offsets
    mail_in = np.zeros(population.size, dtype=bool)
    for r, members in enumerate(population.members()):
        rng = substream(seed, MAIL_IN, r)
        m = int(round(sample_fraction * members.size))
        if m == 0:
            continue
        chosen = rng.choice(members, size=m, replace=False)
        score = w[offsets + population.codes[chosen]].sum(axis=1) + weights.bias
        mail_in[chosen] = rng.random(m) < expit(score)
    params = {**population.params, "mail_in_fraction": sample_fraction}
    return replace(population, mail_in=mail_in, params=params)


# ── Demographics ────────────────────────────────────────


def region_demographics(region: Region) -> DemographicProfile:
    if region.size == 0:
        raise PopulationError(f"region {region.region_id} is empty")
    fractions = tuple(
        np.bincount(region.codes[:, a], minlength=attr.size) / region.size
        for a, attr in enumerate(region.schema.attributes)
    )
    return DemographicProfile(region.schema, fractions)


def demographic_counts(population: Population) -> Tuple[np.ndarray, ...]:
    """Per attribute, an (n_regions, categories) array of head counts."""
    out = []
    for a, attr in enumerate(population.schema.attributes):
        flat = population.region_ids * attr.size + population.codes[:, a]
        counts = np.bincount(flat, minlength=population.n_regions * attr.size)
        out.append(counts.reshape(population.n_regions, attr.size))
    return tuple(out)
