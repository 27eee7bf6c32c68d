"""Cannings models with directional selection: forward frequency process,
ancestral selection processes (Cannings and Moran), exact small-N oracles and
duality checks."""
from .paintbox import (ConstantY, DirichletType, GammaY, PopulationParams, SymmetricDirichlet,
                       UniformY, WrightFisher, parse_weight_model, rho_squared)
from .stats import EstimatorResult, ParameterError, StreamSpec, derive_stream

__version__ = "0.1.0"

__all__ = [
    "ConstantY", "DirichletType", "EstimatorResult", "GammaY", "ParameterError",
    "PopulationParams", "StreamSpec", "SymmetricDirichlet", "UniformY", "WrightFisher",
    "derive_stream", "parse_weight_model", "rho_squared",
]
