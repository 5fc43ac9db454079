"""Identification of nonlinear acyclic networks from sink measurements."""

from .basis import (EdgeFunction, Monomial, ScaledLogistic, Sine, Tanh, deriv_k,
                    edge_deriv_k, edge_eval, evaluate, parse_basis)
from .graph import (F_Z, F_ZNL, Edge, NetworkSpec, Stage, identification_schedule,
                    linearity_hazard, parallel_path_groups, required_measurements, sinks,
                    sources, validate)
from .netfile import load_network, parse_network

__version__ = "0.1.0"
