"""Seeded randomness extraction from reverse block sources by block-wise Toeplitz hashing.

The root package exposes the extraction core. Source models, simulators
and oracles live in :mod:`rbsextract.entropy`, :mod:`rbsextract.sources`
and :mod:`rbsextract.verify`.
"""
from .bitcore import BitString, ToeplitzKernel, ToeplitzSpec, toeplitz_matvec, toeplitz_matvec_packed
from .errors import (CertifiedEntropyWarning, DegeneratePlanError, DivergentPlanError,
                     InfeasiblePlanError, ModelError, NoSolutionError, ParameterError, RbsError,
                     RefusalError, StateError, UnsupportedError)
from .gadget import GadgetParams, extract, extract_expanded, make_gadget_params
from .planner import EqPlan, NeqPlan, neq_error_after_k, parse_plan, plan_eq, plan_neq
from .stream import ExtractionSummary, ExtractorState, extract_eq_parallel

__version__ = "0.1.0"
