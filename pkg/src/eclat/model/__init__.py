"""Declarative domain-model representation consumed by analysis and simulation."""

from eclat.model.descriptor import (
    SCHEMA_VERSION,
    AggregateDescriptor,
    ModelDescriptor,
    OperationDescriptor,
    ProjectionRef,
    StateSpaceSpec,
    UpdateKind,
    enumerate_states,
    load_model,
    model_to_dict,
    parse_model,
    serialize_model,
)
from eclat.model.validate import Finding, validate_model

__all__ = [
    "SCHEMA_VERSION",
    "AggregateDescriptor",
    "Finding",
    "ModelDescriptor",
    "OperationDescriptor",
    "ProjectionRef",
    "StateSpaceSpec",
    "UpdateKind",
    "enumerate_states",
    "load_model",
    "model_to_dict",
    "parse_model",
    "serialize_model",
    "validate_model",
]
