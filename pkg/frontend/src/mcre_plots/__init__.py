"""Static figure rendering for the simulation lab's CSV artifacts.

Consumes only the documented CSV schemas; all estimates and fits come from
the upstream pipeline, figures carry no computation of their own.
"""

from .render import PlotJob, SchemaError, render, template_curve

__version__ = "0.1.0"
