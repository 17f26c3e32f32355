import math

import pytest

from momentctl.algebra import Polynomial, QuadraticModule, VariableSet
from momentctl.asymptotics import (ArchimedeanVerdict, CarlemanVerdict, TightnessVerdict, archimedean, carleman,
                                   partial_split, suggest_schedule, summary_csv, tightness)
from momentctl.errors import ScheduleIncompleteError
from momentctl.functional import (DiracProduct, GaussianProduct, MomentFunctional, UniformBoxProduct,
                                  functional_from_json)
from momentctl.measures import AtomicMeasure, GaussianMarginal
from momentctl.projective import ProjectiveFamily, seal

from helpers import atomic
from oracles import normal_box_mass, odd_double_factorial

X = Polynomial.var
gauss = MomentFunctional(GaussianProduct({i: 1.0 for i in range(1, 7)}))
uniform = MomentFunctional(UniformBoxProduct({1: 1.0, 2: 1.0}))


def lognormal_table():
    return functional_from_json({"type": "table", "max_degree": 100, "moments": [
        {"index": {"1": 2 * n}, "log_value": 2.0 * n * n} for n in range(1, 51)]})


def test_carleman_gaussian_partial_sum():
    rep = carleman(gauss, 1, 50)
    oracle = math.fsum(odd_double_factorial(2 * n) ** (-1 / (2 * n)) for n in range(1, 51))
    assert rep.partial_sum == pytest.approx(oracle, rel=1e-12)
    assert rep.verdict is CarlemanVerdict.DIVERGENCE_CERTIFIED


def test_carleman_lognormal_inconclusive():
    rep = carleman(lognormal_table(), 1, 50)
    oracle = math.fsum(math.exp(-n) for n in range(1, 51))
    assert rep.partial_sum == pytest.approx(oracle, rel=1e-12)
    assert rep.partial_sum < 1 and rep.verdict is CarlemanVerdict.INCONCLUSIVE


def test_carleman_dirac_certified():
    assert carleman(MomentFunctional(DiracProduct({})), 1, 50).verdict is CarlemanVerdict.DIVERGENCE_CERTIFIED


def test_archimedean_examples():
    Q = QuadraticModule([1 - X(1) ** 2, 1 - X(2) ** 2])
    rep = archimedean(Q, uniform, VariableSet([1, 2]), 50)
    assert rep.verdict is ArchimedeanVerdict.ARCHIMEDEAN_SYNTACTIC
    assert rep.per_variable_bound == {1: 1.0, 2: 1.0} and all(rep.growth_check.values())
    assert archimedean(QuadraticModule([X(1)]), uniform, VariableSet([1]), 5).verdict is ArchimedeanVerdict.UNKNOWN
    rep = archimedean(QuadraticModule([1 - X(1) ** 2]), gauss, VariableSet([1]), 50)
    assert rep.verdict is ArchimedeanVerdict.ARCHIMEDEAN_SYNTACTIC
    assert not rep.growth_check[1] and rep.first_violation[1] == 2


def test_ball_generator_bound():
    rep = archimedean(QuadraticModule([4 - X(1) ** 2 - 2 * X(2) ** 2]), uniform, VariableSet([1, 2]), 10)
    assert rep.per_variable_bound[1] == pytest.approx(2.0)
    assert rep.per_variable_bound[2] == pytest.approx(math.sqrt(2.0))


def test_partial_split_examples():
    mixed = MomentFunctional(UniformBoxProduct({1: 1.0}))
    L = MomentFunctional(GaussianProduct({2: 1.0}))
    # uniform on x1 and Gaussian on x2: build as a table-free product via the atomic-free route
    split = partial_split(QuadraticModule([1 - X(1) ** 2]), _product(mixed, L), VariableSet([1, 2]))
    assert tuple(split) == (VariableSet([1]), VariableSet([2]), VariableSet())
    g_a, g_c, unc = partial_split(QuadraticModule([]), gauss, VariableSet([1, 2]))
    assert (g_a, g_c, unc) == (VariableSet(), VariableSet([1, 2]), VariableSet())
    assert partial_split(QuadraticModule([]), lognormal_table(), VariableSet([1])).uncovered == VariableSet([1])


def _product(a, b):
    """Table functional for the product of two one-variable closed-form functionals."""
    from momentctl.algebra import MultiIndex
    entries = []
    for p in range(0, 101):
        for q in range(0, 101 - p):
            v = a.moment(MultiIndex.var(1, p)) * b.moment(MultiIndex.var(2, q))
            entries.append({"index": {"1": p, "2": q}, "value": v})
    return functional_from_json({"type": "table", "max_degree": 100, "moments": entries})


def gaussian_chain(n=6):
    return seal(ProjectiveFamily({VariableSet(range(1, k + 1)): GaussianMarginal(
        VariableSet(range(1, k + 1)), {i: 1.0 for i in range(1, k + 1)}) for k in range(1, n + 1)}))


def test_tightness_examples():
    box = seal(ProjectiveFamily({VariableSet([1]): atomic([1], [[-1.0], [1.0]], [0.5, 0.5])}))
    cert = tightness(box, 0.1, {1: 1.0})
    assert cert.verdict is TightnessVerdict.CERTIFIED and set(cert.per_index_mass.values()) == {1.0}

    fam = gaussian_chain()
    cert = tightness(fam, 0.1, {i: 1.0 for i in range(1, 7)})
    assert cert.verdict is TightnessVerdict.FAILED
    assert cert.per_index_mass[VariableSet(range(1, 7))] == pytest.approx(normal_box_mass(1.0, 1.0, 6), rel=1e-12)

    schedule = suggest_schedule(fam, 0.1)
    radii = [schedule[i] for i in range(1, 7)]
    assert radii == sorted(radii)
    for k, r in enumerate(radii, start=1):
        assert 1 - normal_box_mass(r, 1.0, 1) == pytest.approx(0.1 * 2.0 ** -k, rel=1e-9)
    assert tightness(fam, 0.1, schedule).verdict is TightnessVerdict.CERTIFIED

    with pytest.raises(ScheduleIncompleteError):
        tightness(fam, 0.1, {1: 1.0})


def test_suggest_schedule_examples():
    dirac = seal(ProjectiveFamily({VariableSet([1]): AtomicMeasure.dirac({1: 0.0})}))
    assert suggest_schedule(dirac, 0.1) == {1: 0.0}
    pm1 = seal(ProjectiveFamily({VariableSet([1]): atomic([1], [[-1.0], [1.0]], [0.5, 0.5])}))
    assert suggest_schedule(pm1, 0.1) == {1: 1.0}


def test_summary_csv_rows():
    fam = gaussian_chain(2)
    split = partial_split(QuadraticModule([]), gauss, VariableSet([1, 2]))
    text = summary_csv(split, tightness(fam, 0.1, suggest_schedule(fam, 0.1)))
    rows = text.strip().splitlines()
    assert rows[0].startswith("kind,key,group") and len(rows) == 1 + 2 + 2
