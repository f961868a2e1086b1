"""Crop, pest and awareness dynamics with integrated pest-management control."""

from .model import ControlTriple, ModelParams, State, jacobian, rhs, rhs_controlled

__version__ = "0.1.0"

__all__ = ["ControlTriple", "ModelParams", "State", "jacobian", "rhs", "rhs_controlled"]
