"""Falsification-oriented verification of feedforward networks against VNNLIB
properties, using LHSMDU sampling and L-BFGS-B refinement of output bounds."""

from .bounds import OutputBounds, Provenance, estimate_output_bounds, extract_optima, refine_bounds
from .checker import (
    Interval,
    TruthValue,
    Verdict,
    VerdictKind,
    UnknownReason,
    decide,
    eval_atom_interval,
    eval_formula_interval,
    eval_point,
)
from .onnx_runtime import Network, infer, input_size, load_network, load_network_file
from .optimizer import Objective, OptConfig, OptResult, OptStatus, fd_gradient, minimize
from .sampler import SampleSet, lhsmdu, nearest_neighbor_prune
from .vnnlib import (
    Box,
    SpecFile,
    extract_input_box,
    format_spec,
    has_complex_input_disjunction,
    load_spec,
    parse_spec,
)

__version__ = "0.1.0"
