"""Projective families of marginals and the cylinder measure they induce."""

from __future__ import annotations

import enum
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .algebra import Polynomial, VariableSet, evaluate, support
from .errors import BaseNotCoveredError, ExactnessViolation, MomentError
from .extraction import EXACTNESS_TOL, ExactnessReport, ExactnessVerdict, check_exactness
from .measures import AtomicMeasure, marginal_from_json


def close_under_union(sets: Iterable[VariableSet]) -> list[VariableSet]:
    """Smallest union-closed family containing ``sets``, sorted by size then ids."""
    family = {VariableSet(s) for s in sets}
    frontier = set(family)
    while frontier:
        new = set()
        for a in frontier:
            for b in family:
                u = a | b
                if u not in family:
                    new.add(u)
        family |= new
        frontier = new
    return sorted(family, key=VariableSet.key)


def covering_pairs(index_list: Sequence[VariableSet]) -> list[tuple[VariableSet, VariableSet]]:
    """Pairs F < F' with no index strictly between them."""
    pairs = []
    for small in index_list:
        for large in index_list:
            if small < large and not any(small < mid < large for mid in index_list):
                pairs.append((small, large))
    return pairs


def comparable_pairs(index_list: Sequence[VariableSet]) -> list[tuple[VariableSet, VariableSet]]:
    return [(a, b) for a in index_list for b in index_list if a < b]


class ProjectiveFamily:
    """Finite directed family of marginals {mu_F}."""

    def __init__(self, measures: Mapping[VariableSet, object]):
        self.measures = {VariableSet(F): mu for F, mu in measures.items()}
        for F, mu in self.measures.items():
            if VariableSet(mu.variable_set) != F:
                raise ValueError(f"marginal stored under {F} lives on {mu.variable_set}")
        self.index_list = sorted(self.measures, key=VariableSet.key)

    def __len__(self) -> int:
        return len(self.index_list)

    def __getitem__(self, F) -> object:
        return self.measures[VariableSet(F)]

    def is_union_closed(self) -> bool:
        idx = set(self.index_list)
        return all((a | b) in idx for a in idx for b in idx)

    def smallest_cover(self, base: VariableSet) -> VariableSet:
        for F in self.index_list:
            if base <= F:
                return F
        raise BaseNotCoveredError(f"no index in the family contains {base}")

    @property
    def sealed(self) -> bool:
        return False


class SealedFamily(ProjectiveFamily):
    """A family whose exactness has been verified; only these expose evaluation and sampling."""

    def __init__(self, measures, exactness: ExactnessReport):
        super().__init__(measures)
        self.exactness = exactness

    @property
    def sealed(self) -> bool:
        return True


def seal(family: ProjectiveFamily, tol: float = EXACTNESS_TOL) -> SealedFamily:
    if not family.is_union_closed():
        raise MomentError("index list is not closed under union; call close_under_union first")
    report = check_exactness(family, covering_pairs(family.index_list), tol)
    if report.verdict is not ExactnessVerdict.EXACT:
        small, large = report.worst_pair
        raise ExactnessViolation(
            f"marginals on {small} and {large} disagree: discrepancy {report.max_discrepancy:.3g} > {tol:g}",
            pair=report.worst_pair, discrepancy=report.max_discrepancy)
    return SealedFamily(family.measures, report)


class Op(str, enum.Enum):
    GE = ">="
    GT = ">"
    LE = "<="
    LT = "<"


@dataclass(frozen=True)
class Ineq:
    """g(x) <op> c."""

    g: Polynomial
    op: Op
    c: float

    def __post_init__(self):
        object.__setattr__(self, "op", Op(self.op))

    def holds(self, x) -> bool:
        v = evaluate(self.g, x)
        return {Op.GE: v >= self.c, Op.GT: v > self.c, Op.LE: v <= self.c, Op.LT: v < self.c}[self.op]

    def variables(self) -> VariableSet:
        return support(self.g)


@dataclass(frozen=True)
class And:
    parts: tuple

    def holds(self, x) -> bool:
        return all(p.holds(x) for p in self.parts)

    def variables(self) -> VariableSet:
        return VariableSet(i for p in self.parts for i in p.variables())


@dataclass(frozen=True)
class Or:
    parts: tuple

    def holds(self, x) -> bool:
        return any(p.holds(x) for p in self.parts)

    def variables(self) -> VariableSet:
        return VariableSet(i for p in self.parts for i in p.variables())


@dataclass(frozen=True)
class Not:
    part: object

    def holds(self, x) -> bool:
        return not self.part.holds(x)

    def variables(self) -> VariableSet:
        return self.part.variables()


class _Always:
    def holds(self, x) -> bool:
        return True

    def variables(self) -> VariableSet:
        return VariableSet()

    def __repr__(self) -> str:
        return "TRUE"


TRUE = _Always()


@dataclass(frozen=True)
class CylinderSet:
    """Preimage of {x in R^base : predicate(x)} under the projection to ``base_variables``."""

    base_variables: VariableSet
    predicate: object = TRUE

    def __post_init__(self):
        object.__setattr__(self, "base_variables", VariableSet(self.base_variables))
        if not self.predicate.variables() <= self.base_variables:
            raise ValueError(f"predicate uses {self.predicate.variables()} outside base {self.base_variables}")

    def contains(self, x) -> bool:
        return self.predicate.holds(x)


@dataclass(frozen=True)
class CylinderMeasureValue:
    value: float
    base_used: VariableSet


def measure_of(family: SealedFamily, C: CylinderSet) -> CylinderMeasureValue:
    """Mass of the cylinder set, read off the smallest index containing its base."""
    _require_sealed(family)
    F = family.smallest_cover(C.base_variables)
    mu = family.measures[F]
    if isinstance(mu, AtomicMeasure):
        mass = math.fsum(w for p, w in mu.atom_dicts() if C.contains(p))
    else:
        mass = _product_mass(mu, C.predicate)
    return CylinderMeasureValue(min(max(mass, 0.0), 1.0), F)


def _product_mass(mu, predicate) -> float:
    """Exact mass of an axis-aligned box predicate under a product marginal."""
    bounds = {i: [-math.inf, math.inf] for i in mu.variable_set}
    parts = predicate.parts if isinstance(predicate, And) else (() if predicate is TRUE else (predicate,))
    for part in parts:
        if not isinstance(part, Ineq) or part.g.degree != 1 or len(part.variables()) != 1:
            raise MomentError("continuous marginals only support conjunctions of single-variable linear bounds")
        (i,) = part.variables().ids
        terms = part.g.terms
        a = next(c for m, c in terms.items() if m)
        b = sum(c for m, c in terms.items() if not m)
        t = (part.c - b) / a
        upper = (part.op in (Op.LE, Op.LT)) == (a > 0)
        if upper:
            bounds[i][1] = min(bounds[i][1], t)
        else:
            bounds[i][0] = max(bounds[i][0], t)
    return math.prod(mu.interval_mass(i, lo, hi) if lo < hi else 0.0 for i, (lo, hi) in bounds.items())


def _require_sealed(family) -> None:
    if not getattr(family, "sealed", False):
        raise MomentError("family must be sealed before evaluation or sampling")


def random_predicate(F: VariableSet, rng: np.random.Generator, atomic: bool = True):
    """Random boolean combination of half-spaces with integer coefficients and thresholds.

    Integer thresholds keep boundaries away from generic atoms. For
    continuous marginals only axis-aligned boxes are generated.
    """
    ids = list(F)
    if not atomic:
        parts = []
        for i in ids:
            if rng.random() < 0.7:
                lo, hi = sorted(rng.integers(-3, 4, size=2))
                parts.append(Ineq(Polynomial.var(i), Op.GE, float(lo)))
                parts.append(Ineq(Polynomial.var(i), Op.LE, float(hi)))
        return And(tuple(parts)) if parts else TRUE

    def halfspace():
        coeffs = rng.integers(-2, 3, size=len(ids))
        if not coeffs.any():
            coeffs[rng.integers(len(ids))] = 1
        g = sum((float(a) * Polynomial.var(i) for a, i in zip(coeffs, ids) if a), Polynomial())
        return Ineq(g, list(Op)[rng.integers(4)], float(rng.integers(-3, 4)))

    if not ids:
        return TRUE
    kind = rng.integers(4)
    if kind == 0:
        return halfspace()
    if kind == 1:
        return And((halfspace(), halfspace()))
    if kind == 2:
        return Or((halfspace(), And((halfspace(), halfspace()))))
    return Not(halfspace())


def well_definedness_audit(family: SealedFamily, trials: int, seed: int) -> float:
    """Statistical surrogate for well-definedness of the cylinder measure.

    Each trial writes one random event on a base F and again on a larger
    base F' from the family, and compares the two evaluations. Returns the
    maximum absolute discrepancy.
    """
    _require_sealed(family)
    pairs = comparable_pairs(family.index_list)
    if trials == 0 or not pairs:
        return 0.0
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        small, large = pairs[rng.integers(len(pairs))]
        atomic = all(isinstance(family.measures[s], AtomicMeasure) for s in (small, large))
        pred = random_predicate(small, rng, atomic)
        a = measure_of(family, CylinderSet(small, pred)).value
        b = _evaluate_on(family, large, pred)
        worst = max(worst, abs(a - b))
    return worst


def _evaluate_on(family, F: VariableSet, predicate) -> float:
    mu = family.measures[F]
    if isinstance(mu, AtomicMeasure):
        return math.fsum(w for p, w in mu.atom_dicts() if predicate.holds(p))
    return _product_mass(mu, predicate)


def sample(family: SealedFamily, F_target: VariableSet, count: int, seed: int) -> np.ndarray:
    """``count`` i.i.d. draws from mu_{F_target}; rows are points with columns ordered by variable id."""
    _require_sealed(family)
    F_target = VariableSet(F_target)
    if F_target not in family.measures:
        raise BaseNotCoveredError(f"{F_target} is not an index of the family")
    return family.measures[F_target].sample(count, np.random.default_rng(seed))


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_bundle(family: ProjectiveFamily, directory: str | os.PathLike) -> Path:
    """Write one JSON file per marginal plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for F in family.index_list:
        _atomic_write(directory / f"{F.label()}.json",
                      json.dumps(family.measures[F].to_json(), indent=2, sort_keys=True))
    manifest = {
        "index_list": [list(F.ids) for F in family.index_list],
        "files": [f"{F.label()}.json" for F in family.index_list],
        "sealed": family.sealed,
        "exactness": family.exactness.to_json() if family.sealed else None,
    }
    _atomic_write(directory / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
    return directory


def load_bundle(directory: str | os.PathLike) -> ProjectiveFamily:
    """Read a bundle back; the result is unsealed until ``seal`` is run again."""
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    measures = {}
    for ids, name in zip(manifest["index_list"], manifest["files"]):
        measures[VariableSet(ids)] = marginal_from_json(json.loads((directory / name).read_text()))
    return ProjectiveFamily(measures)
