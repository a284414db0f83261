"""Figure rendering for asyncbo analysis tables."""

from .figures import FigureSpec, build_figure, render
from .tables import AnalysisTable, read_analysis_table

__version__ = "0.1.0"
