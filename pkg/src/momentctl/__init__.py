"""Representing measures for moment functionals in countably many variables."""

from .algebra import (ONE, MultiIndex, Polynomial, QuadraticModule, VariableSet, evaluate, grlex_key,
                      monomials_up_to, parse_polynomial, restrict_module, support)
from .asymptotics import (ArchimedeanVerdict, CarlemanVerdict, TightnessVerdict, archimedean, carleman,
                          partial_split, suggest_schedule, tightness)
from .errors import *  # noqa: F401,F403
from .extraction import (ExactnessVerdict, check_exactness, check_support, extract, moment_mismatch,
                         pushforward, solve_flat)
from .functional import (AtomicOracle, DiracProduct, GaussianProduct, MomentFunctional, Table,
                         UniformBoxProduct, functional_from_json, functional_to_json, moment, restrict, riesz)
from .matrices import PsdVerdict, find_flat_order, flatness, moment_matrix, psd_check
from .measures import AtomicMeasure, GaussianMarginal, UniformBoxMarginal
from .pipeline import JobDescriptor, Overall, PipelineVerdict, run
from .projective import (TRUE, And, CylinderSet, Ineq, Not, Op, Or, ProjectiveFamily, SealedFamily,
                         close_under_union, load_bundle, measure_of, sample, save_bundle, seal,
                         well_definedness_audit)

__version__ = "0.1.0"
