"""JSON Schemas for model descriptors, scenarios and reports."""
