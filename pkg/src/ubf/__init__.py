"""Composed barrier functions for safe control with state and input constraints."""
from .config import ConfigError, RunConfig, from_dict, load_config
from .fields import ClassKappa, FdPolicy, ScalarField, input_norm_barrier, quadratic_distance_barrier
from .hocomp import PhiChain, PiChain, build_phi_chain, build_pi_chain, pi_qp_data
from .lse_compose import ComposedUbf, QpData, compose, evaluate, qp_data
from .nrflow import NrConfig, nr_tau
from .qpsolve import DenseQp, QpInfeasible, solve_dense, solve_halfspace
from .sim import SimLog, emit_outputs, run_experiment
from .spec_lang import ConstraintLeaf, Op, SpecExpr, SpecParseError, exact_membership, parse_spec
from .systems import SystemModel, double_integrator, integrate_step, quadrotor, single_integrator

__version__ = "0.1.0"
