"""
Django EvoSTS

Evolutionary sparse time-series forecasting: LSTM children trained with
stochastic gradient descent and selected by how well a learned sparse
dictionary reconstructs their predictions.
"""

__version__ = "0.1.0"
__author__ = "TUSKION"
__email__ = "opensource@tuskion.com"
