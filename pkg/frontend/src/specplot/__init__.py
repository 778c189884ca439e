"""Figure renderer for the phase-retrieval dynamics simulator's CSV files."""

from .render import PLOT_KINDS, PlotJob, SchemaError, read_csv, render

__version__ = "0.1.0"
