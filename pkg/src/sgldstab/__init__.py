"""Simulation and verification toolkit for SGLD stability and generalization bounds."""
from . import bounds, core, couplings, dynamics, streams, transport
from .core import DataSet, LossModel, make_loss
from .dynamics import InitialSpec, SgldConfig, run_chain

__version__ = "0.1.0"

__all__ = ["DataSet", "InitialSpec", "LossModel", "SgldConfig", "bounds", "core", "couplings",
           "dynamics", "make_loss", "run_chain", "streams", "transport"]
