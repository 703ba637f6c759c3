"""Hybrid physics-based and data-driven linear three-phase power flow."""

from .data import AnchorPair, OperatingSample, generate_samples, pick_anchor_states
from .errors import (BudgetExceeded, FeederError, HybridLPFError, InfeasibleError,
                     NonConvergence, SingularSystem, TrainingError, UnidentifiableAnchors)
from .linear import (ComplexLinearModel, ZipLinearModel, build_flat_model,
                     build_trained_model, build_zip_model, predict_voltages, predict_zip)
from .network import Network, load_feeder, shipped_feeder
from .oracle import SolveOptions, solve_fixed_point, solve_network
from .trainer import TrainerOptions, fit_mu

__version__ = "0.1.0"
