"""
Osculating Calculus - core library

This package contains the layers of the operator calculus:
- graded_nilpotent: graded nilpotent Lie algebras, exact BCH and dilations
- filtered_patch: filtered frames, osculating fibres and exponential charts
- enveloping_calculus: filtered differential operators, cosymbols and kernel families
- kernel_zoom: gridded symbol families, the dual zoom action and homogeneity tests
- expansion_parametrix: polyhomogeneous expansions, asymptotic sums and parametrices
"""

from .errors import CalculusError
from .graded_nilpotent import GradedLieAlgebra, bch_multiply, validate
from .filtered_patch import FilteredPatch, check_filtration, exp_chart
from .enveloping_calculus import FilteredDiffOp, compose, kernel_family, principal_cosymbol
from .kernel_zoom import SymbolFamily, SymbolSlice, cocycle, essential_homogeneity_test, zoom_pullback
from .expansion_parametrix import asymptotic_sum, extract_expansion, invert_cosymbol, parametrix

__all__ = [
    'CalculusError',
    'GradedLieAlgebra',
    'bch_multiply',
    'validate',
    'FilteredPatch',
    'check_filtration',
    'exp_chart',
    'FilteredDiffOp',
    'compose',
    'kernel_family',
    'principal_cosymbol',
    'SymbolFamily',
    'SymbolSlice',
    'cocycle',
    'essential_homogeneity_test',
    'zoom_pullback',
    'asymptotic_sum',
    'extract_expansion',
    'invert_cosymbol',
    'parametrix',
]
