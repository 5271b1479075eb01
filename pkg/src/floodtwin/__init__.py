"""Twin-experiment flood assimilation: shallow-water forward model, ensemble
Kalman filter over friction/inflow/floodplain-state controls, and flood-extent
verification metrics."""

__version__ = "0.1.0"
