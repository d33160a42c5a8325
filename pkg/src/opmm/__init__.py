"""Oculomotor plant simulation and batch-parallel OPC estimation."""

from .errors import (
    DivergenceError, DomainError, DuplicateModelError, FormatError, InputError,
    ModelLookupError, OpmmError, ParseError, SchemaError, ValidationError,
)
from .plant import (
    ControlSignal, ModelSpec, OpcVector, SimulatedTrajectory, build_control_signal,
    default_opc, get_model, plant_derivatives, register_model, registered_models, simulate,
)

__version__ = "0.1.0"
