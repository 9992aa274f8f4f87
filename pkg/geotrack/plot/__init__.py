"""Static trajectory plots."""

from .svg import SvgPlot, plot_trajectories, read_polylines

__all__ = ["SvgPlot", "plot_trajectories", "read_polylines"]
