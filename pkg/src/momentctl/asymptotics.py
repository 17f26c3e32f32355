"""Sufficient-condition diagnostics: Carleman sums, Archimedean bounds, tightness."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Mapping

from .algebra import MultiIndex, QuadraticModule, VariableSet
from .errors import DegreeExceededError, InvalidMomentError, ScheduleIncompleteError
from .functional import AtomicOracle, DiracProduct, GaussianProduct, MomentFunctional, UniformBoxProduct

CARLEMAN_THRESHOLD = 10.0
CARLEMAN_MAX_N = 50


class CarlemanVerdict(str, enum.Enum):
    DIVERGENCE_CERTIFIED = "divergence_certified"
    DIVERGENCE_LIKELY = "divergence_likely"
    INCONCLUSIVE = "inconclusive"


class ArchimedeanVerdict(str, enum.Enum):
    ARCHIMEDEAN_SYNTACTIC = "archimedean_syntactic"
    UNKNOWN = "unknown"


class TightnessVerdict(str, enum.Enum):
    CERTIFIED = "certified"
    FAILED = "failed"


@dataclass(frozen=True)
class CarlemanReport:
    variable: int
    terms_used: int
    partial_sum: float
    closed_form_tag: str | None
    verdict: CarlemanVerdict

    def to_json(self) -> dict:
        return {"variable": self.variable, "terms_used": self.terms_used, "partial_sum": self.partial_sum,
                "closed_form_tag": self.closed_form_tag, "verdict": self.verdict.value}


def _closed_form_tag(L: MomentFunctional) -> str | None:
    src = L.source
    if isinstance(src, GaussianProduct):
        # (2n-1)!!^(1/2n) grows like sqrt(2n/e): the terms behave like 1/sqrt(n)
        return "gaussian"
    if isinstance(src, (UniformBoxProduct, AtomicOracle, DiracProduct)):
        # bounded support R gives terms >= 1/R
        return "compact_support"
    return None


def carleman(L: MomentFunctional, i: int, max_n: int = CARLEMAN_MAX_N,
             threshold: float = CARLEMAN_THRESHOLD) -> CarlemanReport:
    """Partial Carleman sum over n = 1..max_n of L(x_i^(2n))^(-1/(2n)).

    Divergence cannot be decided from finitely many moments, so only
    closed-form sources (or the degenerate point-mass case) are certified.
    """
    total = 0.0
    degenerate = False
    for n in range(1, max_n + 1):
        m = MultiIndex.var(i, 2 * n)
        if 2 * n > L.available_degree:
            raise DegreeExceededError(2 * n, int(L.available_degree))
        raw = L.moment(m)
        if raw < 0:
            raise InvalidMomentError(f"L(x{i}^{2 * n}) = {raw} is negative")
        if raw == 0:
            # a positive functional with a vanishing even moment is the point mass at 0 in x_i
            degenerate = True
            break
        total += math.exp(-L.log_abs_moment(m) / (2 * n))
    tag = _closed_form_tag(L)
    if degenerate:
        tag = tag or "degenerate"
        verdict = CarlemanVerdict.DIVERGENCE_CERTIFIED
    elif tag is not None:
        verdict = CarlemanVerdict.DIVERGENCE_CERTIFIED
    elif total >= threshold:
        verdict = CarlemanVerdict.DIVERGENCE_LIKELY
    else:
        verdict = CarlemanVerdict.INCONCLUSIVE
    return CarlemanReport(i, max_n, total, tag, verdict)


def syntactic_bounds(Q: QuadraticModule) -> dict[int, float]:
    """Per-variable N with N^2 - x_i^2 in Q, read off the generator shapes.

    Recognized: ``c - sum_j a_j x_j^2`` (c > 0, a_j > 0), which gives
    N_j = sqrt(c / a_j); and affine bounds ``u - x_i``, ``x_i - l`` which
    together give N_i = max(|u|, |l|).
    """
    bounds: dict[int, float] = {}
    upper: dict[int, float] = {}
    lower: dict[int, float] = {}

    def offer(i, N):
        bounds[i] = min(bounds.get(i, math.inf), N)

    for g in Q.generators:
        terms = g.terms
        c = terms.pop(MultiIndex(), 0.0)
        if terms and all(len(m.entries) == 1 and m.degree == 2 for m in terms) \
                and all(a < 0 for a in terms.values()) and c > 0:
            for m, a in terms.items():
                offer(m.variables[0], math.sqrt(c / -a))
        elif len(terms) == 1:
            (m, a), = terms.items()
            if m.degree == 1:
                i = m.variables[0]
                t = -c / a
                if a < 0:
                    upper[i] = min(upper.get(i, math.inf), t)
                else:
                    lower[i] = max(lower.get(i, -math.inf), t)
    for i in set(upper) & set(lower):
        if lower[i] <= upper[i]:
            offer(i, max(abs(upper[i]), abs(lower[i])))
    return bounds


@dataclass(frozen=True)
class ArchimedeanReport:
    per_variable_bound: dict
    verdict: ArchimedeanVerdict
    growth_check: dict
    max_ratio: dict = field(default_factory=dict)
    first_violation: dict = field(default_factory=dict)
    orders_tested: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "per_variable_bound": {str(k): v for k, v in sorted(self.per_variable_bound.items())},
            "verdict": self.verdict.value,
            "growth_check": {str(k): v for k, v in sorted(self.growth_check.items())},
            "max_ratio": {str(k): v for k, v in sorted(self.max_ratio.items())},
            "first_violation": {str(k): v for k, v in sorted(self.first_violation.items())},
            "orders_tested": {str(k): v for k, v in sorted(self.orders_tested.items())},
        }


def archimedean(Q: QuadraticModule, L: MomentFunctional, variables: VariableSet,
                max_n: int = CARLEMAN_MAX_N) -> ArchimedeanReport:
    """Syntactic Archimedean detection plus the growth bound L(x_i^(2n)) <= N_i^(2n)."""
    variables = VariableSet(variables)
    found = syntactic_bounds(Q)
    bounds = {i: found[i] for i in variables if i in found}
    growth, ratio, violation, tested = {}, {}, {}, {}
    for i, N in bounds.items():
        top = int(min(max_n, L.available_degree // 2))
        ok, worst, first = True, -math.inf, None
        for n in range(1, top + 1):
            log_m = L.log_abs_moment(MultiIndex.var(i, 2 * n))
            log_ratio = log_m - 2 * n * math.log(N) if N > 0 else (0.0 if log_m == -math.inf else math.inf)
            worst = max(worst, log_ratio)
            if log_ratio > 1e-12 and first is None:
                ok, first = False, n
        growth[i] = ok
        ratio[i] = math.exp(worst) if worst > -math.inf else 0.0
        violation[i] = first
        tested[i] = top
    verdict = (ArchimedeanVerdict.ARCHIMEDEAN_SYNTACTIC if len(bounds) == len(variables)
               else ArchimedeanVerdict.UNKNOWN)
    return ArchimedeanReport(bounds, verdict, growth, ratio, violation, tested)


@dataclass(frozen=True)
class SplitReport:
    archimedean_part: VariableSet
    carleman_part: VariableSet
    uncovered: VariableSet
    archimedean: ArchimedeanReport
    carleman: dict

    @property
    def hypothesis_satisfied(self) -> bool:
        return len(self.uncovered) == 0

    def __iter__(self):
        return iter((self.archimedean_part, self.carleman_part, self.uncovered))

    def to_json(self) -> dict:
        return {
            "G_a": list(self.archimedean_part.ids),
            "G_c": list(self.carleman_part.ids),
            "uncovered": list(self.uncovered.ids),
            "hypothesis_satisfied": self.hypothesis_satisfied,
            "archimedean": self.archimedean.to_json(),
            "carleman": {str(k): (v.to_json() if isinstance(v, CarlemanReport) else v)
                         for k, v in sorted(self.carleman.items())},
        }


def partial_split(Q: QuadraticModule, L: MomentFunctional, variables: VariableSet,
                  max_n: int = CARLEMAN_MAX_N, threshold: float = CARLEMAN_THRESHOLD) -> SplitReport:
    """Split variables into Archimedean-bounded, Carleman-divergent, and uncovered."""
    variables = VariableSet(variables)
    arch = archimedean(Q, L, variables, max_n)
    g_a = [i for i in variables if i in arch.per_variable_bound and arch.growth_check[i]]
    g_c, uncovered, reports = [], [], {}
    for i in variables:
        if i in g_a:
            continue
        n_avail = int(min(max_n, L.available_degree // 2))
        try:
            rep = carleman(L, i, n_avail, threshold)
        except (DegreeExceededError, InvalidMomentError) as exc:
            reports[i] = {"error": str(exc)}
            uncovered.append(i)
            continue
        reports[i] = rep
        if rep.verdict is CarlemanVerdict.INCONCLUSIVE:
            uncovered.append(i)
        else:
            g_c.append(i)
    return SplitReport(VariableSet(g_a), VariableSet(g_c), VariableSet(uncovered), arch, reports)


@dataclass(frozen=True)
class TightnessCertificate:
    epsilon: float
    radius_schedule: dict
    per_index_mass: dict
    verdict: TightnessVerdict

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "radius_schedule": {str(k): v for k, v in sorted(self.radius_schedule.items())},
            "per_index_mass": [{"index": list(F.ids), "mass": m}
                               for F, m in sorted(self.per_index_mass.items(), key=lambda kv: kv[0].key())],
            "verdict": self.verdict.value,
        }


def _family_variables(family) -> VariableSet:
    return VariableSet(i for F in family.index_list for i in F)


def tightness(family, epsilon: float, schedule: Mapping[int, float | None]) -> TightnessCertificate:
    """Check mu_F(prod_{i in F} [-R_i, R_i]) >= 1 - epsilon on every materialized index.

    Boxes project onto boxes, so the compact sets are automatically nested.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    missing = [i for i in _family_variables(family) if schedule.get(i) is None]
    if missing:
        raise ScheduleIncompleteError(f"no radius for variables {missing}")
    radii = {i: float(schedule[i]) for i in _family_variables(family)}
    masses = {F: family.measures[F].box_mass(radii) for F in family.index_list}
    ok = all(m >= 1 - epsilon for m in masses.values())
    return TightnessCertificate(epsilon, radii, masses,
                                TightnessVerdict.CERTIFIED if ok else TightnessVerdict.FAILED)


def suggest_schedule(family, epsilon: float) -> dict[int, float | None]:
    """Radii whose single-coordinate tails sum to less than epsilon.

    The k-th variable (sorted by id, k from 1) gets tail budget
    epsilon * 2^-k, so a union bound keeps every box mass above 1 - epsilon.
    Variables whose marginals cannot report a tail radius map to None.
    """
    schedule: dict[int, float | None] = {}
    for rank, i in enumerate(_family_variables(family), start=1):
        budget = epsilon * 2.0 ** -rank
        radius = 0.0
        for F in family.index_list:
            if i not in F:
                continue
            mu = family.measures[F]
            if not hasattr(mu, "tail_radius"):
                radius = None
                break
            radius = max(radius, mu.tail_radius(i, budget))
        schedule[i] = radius
    return schedule


def summary_csv(split: SplitReport, certificate: TightnessCertificate | None = None) -> str:
    """One row per variable, then one row per index when a certificate is given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "key", "group", "bound", "growth_ok", "carleman_sum", "carleman_verdict", "radius", "mass"])
    variables = sorted(set(split.archimedean_part) | set(split.carleman_part) | set(split.uncovered))
    for i in variables:
        group = "G_a" if i in split.archimedean_part else "G_c" if i in split.carleman_part else "uncovered"
        rep = split.carleman.get(i)
        w.writerow(["variable", i, group, split.archimedean.per_variable_bound.get(i, ""),
                    split.archimedean.growth_check.get(i, ""),
                    rep.partial_sum if isinstance(rep, CarlemanReport) else "",
                    rep.verdict.value if isinstance(rep, CarlemanReport) else "",
                    certificate.radius_schedule.get(i, "") if certificate else "", ""])
    if certificate:
        for F, m in sorted(certificate.per_index_mass.items(), key=lambda kv: kv[0].key()):
            w.writerow(["index", F.label(), "", "", "", "", "", "", m])
    return buf.getvalue()
