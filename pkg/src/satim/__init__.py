"""Saturated induction-motor model, HF injection and first-order observability."""

from satim.dynamics import (
    TABLE_I,
    Equilibrium,
    ImInputs,
    ImState,
    MotorParams,
    equilibrium_locked_rotor,
    equilibrium_zero_stator_speed,
    simulate,
)
from satim.injection import InjectionSpec, demodulate, fit_saliency, measure_saliency
from satim.magnetics import (
    TABLE_II_LINEAR,
    TABLE_II_SATURATED,
    LinearEnergy,
    SaliencyParams,
    SaturatedEnergy,
    saliency_params,
)
from satim.observability import analyze, condition_sweep

__version__ = "0.1.0"

__all__ = [
    "TABLE_I",
    "TABLE_II_LINEAR",
    "TABLE_II_SATURATED",
    "Equilibrium",
    "ImInputs",
    "ImState",
    "InjectionSpec",
    "LinearEnergy",
    "MotorParams",
    "SaliencyParams",
    "SaturatedEnergy",
    "analyze",
    "condition_sweep",
    "demodulate",
    "equilibrium_locked_rotor",
    "equilibrium_zero_stator_speed",
    "fit_saliency",
    "measure_saliency",
    "saliency_params",
    "simulate",
]
