"""Linear functionals on the polynomial algebra, given by their moments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from .algebra import ONE, MultiIndex, Polynomial, VariableSet
from .errors import DegreeExceededError, DescriptorError, InvalidMomentError, MissingMomentError
from .measures import (AtomicMeasure, GaussianMarginal, UniformBoxMarginal, gaussian_moment,
                       uniform_moment)


@dataclass(frozen=True)
class Table:
    """Tabulated moments up to ``max_degree``.

    ``log_moments`` holds natural logs of positive moments too large for a
    double (e.g. ``exp(2 n^2)``); ``moment`` then returns ``inf`` but
    ``log_abs_moment`` stays exact.
    """

    moments: Mapping[MultiIndex, float]
    max_degree: int
    log_moments: Mapping[MultiIndex, float] = field(default_factory=dict)
    name = "table"


@dataclass(frozen=True)
class GaussianProduct:
    variances: Mapping[int, float]
    name = "gaussian"


@dataclass(frozen=True)
class DiracProduct:
    """Point mass; coordinates not listed are zero."""

    point: Mapping[int, float]
    name = "dirac"


@dataclass(frozen=True)
class AtomicOracle:
    measure: AtomicMeasure
    name = "atomic"


@dataclass(frozen=True)
class UniformBoxProduct:
    radii: Mapping[int, float]
    name = "uniform_box"


CLOSED_FORM = (GaussianProduct, DiracProduct, AtomicOracle, UniformBoxProduct)


class MomentFunctional:
    """The functional L, optionally restricted to a coordinate subalgebra.

    ``scope`` is None for the full algebra; otherwise only monomials supported
    in ``scope`` may be queried.
    """

    def __init__(self, source, scope: VariableSet | None = None):
        self.source = source
        self.scope = scope
        self._cache: dict[MultiIndex, float] = {}

    @property
    def is_closed_form(self) -> bool:
        return isinstance(self.source, CLOSED_FORM)

    @property
    def available_degree(self) -> float:
        if isinstance(self.source, Table):
            return self.source.max_degree
        return math.inf

    def moment(self, m: MultiIndex) -> float:
        cached = self._cache.get(m)
        if cached is not None:
            return cached
        if self.scope is not None and not m.is_supported_in(self.scope):
            raise MissingMomentError(f"{m} is not supported in the restriction scope {self.scope}")
        value = _raw_moment(self.source, m)
        # dict assignment is atomic; a racing duplicate computes the same value
        self._cache[m] = value
        return value

    def log_abs_moment(self, m: MultiIndex) -> float:
        src = self.source
        if isinstance(src, Table) and m in src.log_moments:
            if self.scope is not None and not m.is_supported_in(self.scope):
                raise MissingMomentError(f"{m} is not supported in the restriction scope {self.scope}")
            if m.degree > src.max_degree:
                raise DegreeExceededError(m.degree, src.max_degree)
            return float(src.log_moments[m])
        v = self.moment(m)
        return math.log(abs(v)) if v != 0 else -math.inf

    def riesz(self, p: Polynomial) -> float:
        return math.fsum(c * self.moment(m) for m, c in p.items())

    __call__ = riesz

    def restrict(self, F: VariableSet) -> "MomentFunctional":
        F = VariableSet(F)
        if self.scope is not None:
            F = VariableSet(i for i in F if i in self.scope)
        out = MomentFunctional(self.source, F)
        # share cache entries that are valid in the smaller scope
        out._cache = {m: v for m, v in self._cache.items() if m.is_supported_in(F)}
        return out

    def marginal(self, F: VariableSet):
        """Closed-form marginal on ``F`` or None for tabulated data."""
        F = VariableSet(F)
        src = self.source
        if isinstance(src, GaussianProduct):
            return GaussianMarginal(F, {i: float(src.variances[i]) for i in F})
        if isinstance(src, UniformBoxProduct):
            return UniformBoxMarginal(F, {i: float(src.radii[i]) for i in F})
        if isinstance(src, DiracProduct):
            return AtomicMeasure(F, [({i: float(src.point.get(i, 0.0)) for i in F}, 1.0)])
        if isinstance(src, AtomicOracle):
            return src.measure.pushforward(F)
        return None

    def __repr__(self) -> str:
        scope = "" if self.scope is None else f" on {self.scope}"
        return f"MomentFunctional({self.source.name}{scope})"


def _raw_moment(src, m: MultiIndex) -> float:
    if isinstance(src, Table):
        if m.degree > src.max_degree:
            raise DegreeExceededError(m.degree, src.max_degree)
        if m in src.moments:
            return float(src.moments[m])
        if m in src.log_moments:
            lv = src.log_moments[m]
            return math.exp(lv) if lv < 709.0 else math.inf
        if not m:
            return 1.0
        raise MissingMomentError(f"table has no entry for {m}")
    if isinstance(src, GaussianProduct):
        out = 1.0
        for v, e in m.entries:
            if v not in src.variances:
                raise MissingMomentError(f"no variance given for x{v}")
            out *= gaussian_moment(float(src.variances[v]), e)
        return out
    if isinstance(src, UniformBoxProduct):
        out = 1.0
        for v, e in m.entries:
            if v not in src.radii:
                raise MissingMomentError(f"no radius given for x{v}")
            out *= uniform_moment(float(src.radii[v]), e)
        return out
    if isinstance(src, DiracProduct):
        return math.prod(float(src.point.get(v, 0.0)) ** e for v, e in m.entries)
    if isinstance(src, AtomicOracle):
        return src.measure.moment(m)
    raise TypeError(f"unknown moment source {src!r}")


def moment(L: MomentFunctional, m: MultiIndex) -> float:
    return L.moment(m)


def riesz(L: MomentFunctional, p: Polynomial) -> float:
    return L.riesz(p)


def restrict(L: MomentFunctional, F: VariableSet) -> MomentFunctional:
    return L.restrict(F)


def _int_keys(d: Mapping, what: str) -> dict[int, float]:
    try:
        return {int(k): float(v) for k, v in d.items()}
    except (TypeError, ValueError, AttributeError) as exc:
        raise DescriptorError(f"bad {what} map: {exc}") from exc


def functional_from_json(data: Mapping) -> MomentFunctional:
    """Build a functional from its JSON descriptor."""
    if not isinstance(data, Mapping) or "type" not in data:
        raise DescriptorError("functional descriptor needs a 'type' field")
    kind = data["type"]
    if kind == "gaussian":
        variances = _int_keys(data.get("variances", {}), "variances")
        if any(v < 0 for v in variances.values()):
            raise DescriptorError("variances must be non-negative")
        return MomentFunctional(GaussianProduct(variances))
    if kind == "dirac":
        return MomentFunctional(DiracProduct(_int_keys(data.get("point", {}), "point")))
    if kind == "uniform_box":
        radii = _int_keys(data.get("radii", {}), "radii")
        if any(r <= 0 for r in radii.values()):
            raise DescriptorError("box radii must be positive")
        return MomentFunctional(UniformBoxProduct(radii))
    if kind == "atomic":
        atoms = data.get("atoms", [])
        variables = data.get("variables")
        if variables is None:
            variables = sorted({int(k) for a in atoms for k in a["point"]})
        try:
            measure = AtomicMeasure.from_json({"variables": variables, "atoms": atoms})
        except ValueError as exc:
            raise DescriptorError(str(exc)) from exc
        return MomentFunctional(AtomicOracle(measure))
    if kind == "table":
        if "max_degree" not in data:
            raise DescriptorError("table descriptor needs 'max_degree'")
        moments: dict[MultiIndex, float] = {}
        logs: dict[MultiIndex, float] = {}
        for entry in data.get("moments", []):
            try:
                idx = MultiIndex.from_dict({int(k): int(v) for k, v in entry["index"].items()})
            except (KeyError, TypeError, ValueError) as exc:
                raise DescriptorError(f"bad moment entry {entry!r}") from exc
            if "value" in entry:
                moments[idx] = float(entry["value"])
            elif "log_value" in entry:
                logs[idx] = float(entry["log_value"])
            else:
                raise DescriptorError(f"moment entry {entry!r} has neither 'value' nor 'log_value'")
        if moments.get(ONE, 1.0) != 1.0:
            raise InvalidMomentError(f"L(1) must equal 1, got {moments[ONE]}")
        return MomentFunctional(Table(moments, int(data["max_degree"]), logs))
    raise DescriptorError(f"unknown functional type {kind!r}")


def functional_to_json(L: MomentFunctional) -> dict:
    src = L.source
    if isinstance(src, GaussianProduct):
        return {"type": "gaussian", "variances": {str(k): v for k, v in sorted(src.variances.items())}}
    if isinstance(src, DiracProduct):
        return {"type": "dirac", "point": {str(k): v for k, v in sorted(src.point.items())}}
    if isinstance(src, UniformBoxProduct):
        return {"type": "uniform_box", "radii": {str(k): v for k, v in sorted(src.radii.items())}}
    if isinstance(src, AtomicOracle):
        return {"type": "atomic", **src.measure.to_json()}
    entries = [{"index": {str(v): e for v, e in m.entries}, "value": val} for m, val in src.moments.items()]
    entries += [{"index": {str(v): e for v, e in m.entries}, "log_value": val} for m, val in src.log_moments.items()]
    return {"type": "table", "max_degree": src.max_degree, "moments": entries}
