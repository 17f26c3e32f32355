"""Concrete probability measures on R^F.

``AtomicMeasure`` is the workhorse: finitely many weighted points. The two
product marginals (Gaussian, uniform box) exist so that closed-form sources
can stand in for their own marginals when no flat truncation exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import special

from .algebra import MultiIndex, VariableSet
from .errors import DescriptorError, MissingCoordinateError, NotSubsetError

MERGE_TOL = 1e-7
WEIGHT_SUM_TOL = 1e-9


def double_factorial(k: int) -> int:
    """k!! with the convention (-1)!! = 0!! = 1."""
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


def gaussian_moment(variance: float, k: int) -> float:
    if k % 2:
        return 0.0
    return variance ** (k // 2) * double_factorial(k - 1)


def uniform_moment(radius: float, k: int) -> float:
    if k % 2:
        return 0.0
    return radius**k / (k + 1)


@dataclass(frozen=True)
class Atom:
    point: tuple[float, ...]
    weight: float


class AtomicMeasure:
    """Finitely many weighted atoms in R^F, coordinates ordered as ``variable_set``."""

    kind = "atomic"

    def __init__(self, variable_set: VariableSet, atoms: Sequence[tuple[Mapping[int, float] | Sequence[float], float]],
                 validate: bool = True):
        self.variable_set = VariableSet(variable_set)
        ids = self.variable_set.ids
        pts, wts = [], []
        for point, weight in atoms:
            if isinstance(point, Mapping):
                try:
                    coords = tuple(float(point[i]) for i in ids)
                except KeyError as exc:
                    raise MissingCoordinateError(exc.args[0]) from None
            else:
                coords = tuple(float(c) for c in point)
                if len(coords) != len(ids):
                    raise ValueError(f"atom has {len(coords)} coordinates, expected {len(ids)}")
            pts.append(coords)
            wts.append(float(weight))
        self.points = np.array(pts, dtype=float).reshape(len(pts), len(ids))
        self.weights = np.array(wts, dtype=float)
        if validate:
            if np.any(self.weights <= 0):
                raise ValueError("atom weights must be positive")
            if abs(self.weights.sum() - 1.0) > WEIGHT_SUM_TOL:
                raise ValueError(f"weights sum to {self.weights.sum()!r}, expected 1")

    @classmethod
    def dirac(cls, point: Mapping[int, float]) -> "AtomicMeasure":
        return cls(VariableSet(point), [(point, 1.0)])

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def atoms(self) -> list[Atom]:
        return [Atom(tuple(p), float(w)) for p, w in zip(self.points, self.weights)]

    def atom_dicts(self) -> list[tuple[dict[int, float], float]]:
        ids = self.variable_set.ids
        return [({i: float(c) for i, c in zip(ids, p)}, float(w)) for p, w in zip(self.points, self.weights)]

    def _column(self, i: int) -> np.ndarray:
        try:
            return self.points[:, self.variable_set.ids.index(i)]
        except ValueError:
            raise MissingCoordinateError(i) from None

    def moment(self, m: MultiIndex) -> float:
        vals = self.weights.copy()
        for v, e in m.entries:
            vals = vals * self._column(v) ** e
        return math.fsum(vals)

    def pushforward(self, F: VariableSet, merge_tol: float = MERGE_TOL) -> "AtomicMeasure":
        F = VariableSet(F)
        if not F <= self.variable_set:
            raise NotSubsetError(f"{F} is not a subset of {self.variable_set}")
        cols = [self.variable_set.ids.index(i) for i in F.ids]
        return _merged(F, self.points[:, cols], self.weights, merge_tol)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        if count == 0:
            return np.empty((0, len(self.variable_set)))
        idx = rng.choice(len(self.weights), size=count, p=self.weights / self.weights.sum())
        return self.points[idx]

    def box_mass(self, radii: Mapping[int, float]) -> float:
        inside = np.ones(len(self.weights), dtype=bool)
        for j, i in enumerate(self.variable_set.ids):
            inside &= np.abs(self.points[:, j]) <= radii[i]
        return math.fsum(self.weights[inside])

    def tail_radius(self, i: int, tail: float) -> float:
        """Smallest R with mass{|x_i| > R} <= tail."""
        col = np.abs(self._column(i))
        order = np.argsort(col)[::-1]
        dropped = 0.0
        for k in order:
            if dropped + self.weights[k] > tail:
                return float(col[k])
            dropped += self.weights[k]
        return 0.0

    def single_tail(self, i: int, radius: float) -> float:
        return math.fsum(self.weights[np.abs(self._column(i)) > radius])

    def to_json(self) -> dict:
        return {
            "variables": list(self.variable_set.ids),
            "atoms": [{"point": {str(i): c for i, c in p.items()}, "weight": w} for p, w in self.atom_dicts()],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "AtomicMeasure":
        try:
            F = VariableSet(int(v) for v in data["variables"])
            atoms = [({int(k): float(v) for k, v in a["point"].items()}, float(a["weight"])) for a in data["atoms"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise DescriptorError(f"malformed atomic measure: {exc}") from exc
        return cls(F, atoms)

    def __repr__(self) -> str:
        return f"AtomicMeasure({self.variable_set}, {len(self)} atoms)"


def _merged(F: VariableSet, points: np.ndarray, weights: np.ndarray, tol: float) -> AtomicMeasure:
    order = np.lexsort(points.T[::-1]) if points.shape[1] else np.arange(len(weights))
    centers: list[np.ndarray] = []
    masses: list[float] = []
    for k in order:
        p, w = points[k], weights[k]
        for j, c in enumerate(centers):
            if np.max(np.abs(c - p), initial=0.0) <= tol:
                total = masses[j] + w
                centers[j] = (c * masses[j] + p * w) / total
                masses[j] = total
                break
        else:
            centers.append(p.copy())
            masses.append(float(w))
    return AtomicMeasure(F, [(tuple(c), m) for c, m in zip(centers, masses)], validate=False)


@dataclass(frozen=True)
class GaussianMarginal:
    """Centered product Gaussian on R^F."""

    variable_set: VariableSet
    variances: dict = field(hash=False)
    kind = "gaussian"

    def moment(self, m: MultiIndex) -> float:
        out = 1.0
        for v, e in m.entries:
            if v not in self.variances:
                raise MissingCoordinateError(v)
            out *= gaussian_moment(self.variances[v], e)
        return out

    def pushforward(self, F: VariableSet, merge_tol: float = MERGE_TOL) -> "GaussianMarginal":
        if not F <= self.variable_set:
            raise NotSubsetError(f"{F} is not a subset of {self.variable_set}")
        return GaussianMarginal(VariableSet(F), {i: self.variances[i] for i in F})

    def interval_mass(self, i: int, lo: float, hi: float) -> float:
        s = math.sqrt(self.variances[i])
        if s == 0.0:
            return 1.0 if lo <= 0.0 <= hi else 0.0
        return 0.5 * (special.erf(hi / (s * math.sqrt(2))) - special.erf(lo / (s * math.sqrt(2))))

    def box_mass(self, radii: Mapping[int, float]) -> float:
        return math.prod(self.interval_mass(i, -radii[i], radii[i]) for i in self.variable_set)

    def single_tail(self, i: int, radius: float) -> float:
        return 1.0 - self.interval_mass(i, -radius, radius)

    def tail_radius(self, i: int, tail: float) -> float:
        s = math.sqrt(self.variances[i])
        if s == 0.0:
            return 0.0
        # P(|X| > R) = erfc(R / (s sqrt 2))
        return float(s * math.sqrt(2) * special.erfcinv(tail))

    def cdf(self, i: int, x):
        s = math.sqrt(self.variances[i])
        return 0.5 * (1 + special.erf(np.asarray(x) / (s * math.sqrt(2))))

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        sd = np.sqrt([self.variances[i] for i in self.variable_set])
        return rng.standard_normal((count, len(sd))) * sd

    def to_json(self) -> dict:
        return {"type": "gaussian", "variables": list(self.variable_set.ids),
                "variances": {str(i): self.variances[i] for i in self.variable_set}}


@dataclass(frozen=True)
class UniformBoxMarginal:
    """Uniform distribution on the box prod_i [-r_i, r_i]."""

    variable_set: VariableSet
    radii: dict = field(hash=False)
    kind = "uniform_box"

    def moment(self, m: MultiIndex) -> float:
        out = 1.0
        for v, e in m.entries:
            if v not in self.radii:
                raise MissingCoordinateError(v)
            out *= uniform_moment(self.radii[v], e)
        return out

    def pushforward(self, F: VariableSet, merge_tol: float = MERGE_TOL) -> "UniformBoxMarginal":
        if not F <= self.variable_set:
            raise NotSubsetError(f"{F} is not a subset of {self.variable_set}")
        return UniformBoxMarginal(VariableSet(F), {i: self.radii[i] for i in F})

    def interval_mass(self, i: int, lo: float, hi: float) -> float:
        r = self.radii[i]
        lo, hi = max(lo, -r), min(hi, r)
        if r == 0.0:
            return 1.0 if lo <= 0.0 <= hi else 0.0
        return max(hi - lo, 0.0) / (2 * r)

    def box_mass(self, radii: Mapping[int, float]) -> float:
        return math.prod(self.interval_mass(i, -radii[i], radii[i]) for i in self.variable_set)

    def single_tail(self, i: int, radius: float) -> float:
        return 1.0 - self.interval_mass(i, -radius, radius)

    def tail_radius(self, i: int, tail: float) -> float:
        return self.radii[i] * max(1.0 - tail, 0.0)

    def cdf(self, i: int, x):
        r = self.radii[i]
        return np.clip((np.asarray(x) + r) / (2 * r), 0.0, 1.0)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        r = np.array([self.radii[i] for i in self.variable_set])
        return rng.uniform(-1.0, 1.0, (count, len(r))) * r

    def to_json(self) -> dict:
        return {"type": "uniform_box", "variables": list(self.variable_set.ids),
                "radii": {str(i): self.radii[i] for i in self.variable_set}}


def marginal_from_json(data: Mapping):
    kind = data.get("type", "atomic")
    F = VariableSet(int(v) for v in data["variables"])
    if kind == "atomic":
        return AtomicMeasure.from_json(data)
    if kind == "gaussian":
        return GaussianMarginal(F, {int(k): float(v) for k, v in data["variances"].items()})
    if kind == "uniform_box":
        return UniformBoxMarginal(F, {int(k): float(v) for k, v in data["radii"].items()})
    raise DescriptorError(f"unknown marginal type {kind!r}")
