"""Gibbs T-tessellation model: density proportional to exp(-<theta, s(T)>).

A non-zero ``line_intensity`` multiplies the density by exp(lambda * n_s).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .enumeration import enumerate_supported
from .geometry import LineGeom, PolygonGeom
from .statistics import FeatureSpec, feature_vector, parse_specs
from .tessellation import TTess


@dataclass(frozen=True)
class GibbsModel:
    specs: tuple
    theta: np.ndarray = field(compare=False)
    # log intensity of the reference line measure, per internal segment;
    # only used by the continuous sampler (see README)
    line_intensity: float = 0.0

    def __post_init__(self):
        specs = tuple(FeatureSpec.parse(s) for s in self.specs)
        theta = np.asarray(self.theta, dtype=float).reshape(-1)
        if len(specs) < 1:
            raise ValueError("a model needs at least one statistic")
        if len(theta) != len(specs):
            raise ValueError(f"theta has {len(theta)} entries for {len(specs)} statistics")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta must be finite")
        object.__setattr__(self, "specs", specs)
        object.__setattr__(self, "theta", theta)

    @property
    def dim(self) -> int:
        return len(self.specs)

    def with_theta(self, theta) -> "GibbsModel":
        return GibbsModel(self.specs, theta, self.line_intensity)

    def features(self, t: TTess) -> np.ndarray:
        return feature_vector(self.specs, t)

    def to_dict(self) -> dict:
        d = {"statistics": [s.to_dict() for s in self.specs], "theta": self.theta.tolist()}
        if self.line_intensity:
            d["line_intensity"] = self.line_intensity
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GibbsModel":
        if "statistics" not in d or "theta" not in d:
            raise ValueError("model config needs 'statistics' and 'theta'")
        return cls(tuple(parse_specs(d["statistics"])), d["theta"], float(d.get("line_intensity", 0.0)))

    @classmethod
    def load(cls, path) -> "GibbsModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def energy(m: GibbsModel, t: TTess) -> float:
    return float(np.dot(m.theta, m.features(t)))


def log_unnormalized_density(m: GibbsModel, t: TTess) -> float:
    """-<theta, s(T)> plus the line-intensity term for the internal segments."""
    return -energy(m, t) + m.line_intensity * len(t.segments)


def exact_distribution(
    m: GibbsModel, window: PolygonGeom, lines: list[LineGeom]
) -> list[tuple[TTess, float]]:
    """Probabilities over the tessellations supported by ``lines``."""
    states = enumerate_supported(window, lines)
    logw = np.array([log_unnormalized_density(m, t) for t in states])
    p = np.exp(logw - logsumexp(logw))
    p /= p.sum()
    return list(zip(states, p.tolist()))
