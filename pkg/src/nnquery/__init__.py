"""nnquery: an exact query engine for feedforward ReLU networks.

The engine answers logical queries about networks in two styles: a
sum-augmented first-order logic over the network seen as a weighted graph
(white box), and linear real arithmetic over the network's input–output
function (black box, via exact piecewise-linear extraction and cell
decomposition).  On top of the query layer sit exact integration, SHAP
values, and verification analyses.  All arithmetic is exact rational.
"""

from nnquery.core import BOT, Bottom, Fraction, rational

__all__ = ["BOT", "Bottom", "Fraction", "rational"]
__version__ = "0.1.0"
