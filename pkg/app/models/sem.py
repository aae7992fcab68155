"""
Structural equation models used to generate the synthetic datasets.

Each node value is ``mechanism(parent values) + noise``; roots have a zero
mechanism so their value is the noise draw itself. Labels are computed on the
noise-free skeleton: drawn root noises pushed through the structural
equations with every non-root noise replaced by its mean.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, Tuple

import numpy as np

from app.config.constants import (
    CLAMP_NOTE,
    NOISE_SCALE_NOTE,
    NONLINEAR_EXP_CLAMP,
    TOY_LABEL_MIN_COUNT,
    TOY_LABEL_THRESHOLD,
    TOY_NOISE_STD,
)
from app.core.errors import ShapeError
from app.schemas.dataset import RelationConstraint

Mechanism = Callable[[np.ndarray], np.ndarray]
LabelRule = Callable[[np.ndarray], np.ndarray]


def _root(parents: np.ndarray) -> np.ndarray:
    return np.zeros(parents.shape[0])


@dataclass(frozen=True)
class SemNode:
    name: str
    parents: Tuple[int, ...] = ()
    # Maps an (N, len(parents)) block to N values
    mechanism: Mechanism = _root
    noise_mean: float = 0.0
    noise_std: float = 1.0


@dataclass(frozen=True)
class SemSpec:
    name: str
    nodes: Tuple[SemNode, ...]
    label_rule: LabelRule
    constraints: Tuple[RelationConstraint, ...] = ()
    notes: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for j, node in enumerate(self.nodes):
            if any(p >= j or p < 0 for p in node.parents):
                raise ValueError(f"Node {node.name} depends on a node that is not upstream of it")
            if node.noise_std <= 0:
                raise ValueError(f"Node {node.name} has non-positive noise std {node.noise_std}")

    @property
    def num_attributes(self) -> int:
        return len(self.nodes)

    @property
    def feature_names(self) -> Tuple[str, ...]:
        return tuple(node.name for node in self.nodes)

    def sample_noise(self, n: int, rng: np.random.Generator) -> np.ndarray:
        noise = np.empty((n, self.num_attributes))
        for j, node in enumerate(self.nodes):
            noise[:, j] = rng.normal(node.noise_mean, node.noise_std, size=n)
        return noise

    def evaluate(self, noise: np.ndarray) -> np.ndarray:
        noise = np.atleast_2d(np.asarray(noise, dtype=np.float64))
        if noise.shape[1] != self.num_attributes:
            raise ShapeError(f"{self.name}: expected {self.num_attributes} noise columns, got {noise.shape[1]}")
        values = np.empty_like(noise)
        for j, node in enumerate(self.nodes):
            parents = values[:, list(node.parents)]
            values[:, j] = node.mechanism(parents) + noise[:, j]
        return values

    def skeleton(self, noise: np.ndarray) -> np.ndarray:
        noise = np.atleast_2d(np.asarray(noise, dtype=np.float64)).copy()
        for j, node in enumerate(self.nodes):
            if node.parents:
                noise[:, j] = node.noise_mean
        return self.evaluate(noise)

    def labels(self, noise: np.ndarray) -> np.ndarray:
        return self.label_rule(self.skeleton(noise)).astype(np.int64)

    def simulate(self, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        noise = self.sample_noise(n, rng)
        return self.evaluate(noise), self.labels(noise)


def _toy_label(skeleton: np.ndarray) -> np.ndarray:
    return np.sum(np.sin(skeleton) > TOY_LABEL_THRESHOLD, axis=1) > TOY_LABEL_MIN_COUNT


def _nonlinear_label(skeleton: np.ndarray) -> np.ndarray:
    return np.all(np.sin(skeleton) > 0.0, axis=1)


def toy_sem() -> SemSpec:
    return SemSpec(
        name="toy",
        nodes=(
            SemNode("X1", noise_std=TOY_NOISE_STD),
            SemNode("X2", noise_std=TOY_NOISE_STD),
            SemNode("X3", (0, 1), lambda p: 2.0 * p[:, 0] - p[:, 1], noise_std=TOY_NOISE_STD),
            SemNode("X4", (2,), lambda p: -2.0 * p[:, 0], noise_std=TOY_NOISE_STD),
            SemNode("X5", (2,), lambda p: np.sin(p[:, 0]), noise_std=TOY_NOISE_STD),
        ),
        label_rule=_toy_label,
        constraints=(RelationConstraint(attr_a=2, attr_b=3, sign=-1, description="X3~X4"),),
        notes={"noise": NOISE_SCALE_NOTE},
    )


def _clamped_exp(p: np.ndarray) -> np.ndarray:
    return np.exp(1.5 * np.clip(p[:, 0], -NONLINEAR_EXP_CLAMP, NONLINEAR_EXP_CLAMP)) + 2.0


def nonlinear_sem() -> SemSpec:
    return SemSpec(
        name="nonlinear",
        nodes=(
            SemNode("X1", noise_mean=2.0, noise_std=0.5),
            SemNode("X2", (0,), lambda p: p[:, 0] ** 2, noise_std=0.25),
            SemNode("X3", (0,), lambda p: np.sin(-2.0 * p[:, 0]), noise_std=1.0),
            SemNode("X4", noise_mean=1.0, noise_std=1.0),
            SemNode("X5", (3,), _clamped_exp, noise_std=1.0),
        ),
        label_rule=_nonlinear_label,
        constraints=(
            RelationConstraint(attr_a=0, attr_b=1, sign=1, description="|X1|~X2", transform_a="square"),
            RelationConstraint(attr_a=3, attr_b=4, sign=1, description="X4~X5"),
        ),
        notes={"noise": NOISE_SCALE_NOTE, "clamp": CLAMP_NOTE},
    )


SEMS = {"toy": toy_sem, "nonlinear": nonlinear_sem}
