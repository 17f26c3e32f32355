"""Builders shared by the test modules."""

from momentctl.algebra import MultiIndex, VariableSet
from momentctl.functional import MomentFunctional, Table
from momentctl.measures import AtomicMeasure

from oracles import atomic_moment, exponent_tuples


def atomic(ids, points, weights):
    return AtomicMeasure(VariableSet(ids), [(tuple(p), float(w)) for p, w in zip(points, weights)])


def table_from_atoms(ids, points, weights, degree):
    """Moment table computed by brute force from explicit atoms."""
    ids = list(ids)
    moments = {}
    for e in exponent_tuples(len(ids), degree):
        m = MultiIndex.from_dict({i: k for i, k in zip(ids, e) if k})
        moments[m] = atomic_moment(points, weights, e)
    return MomentFunctional(Table(moments, degree))
