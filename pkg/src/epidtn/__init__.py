"""Performance evaluation of epidemic routing in mobile social networks.

Four engines share one parameter set: an exact monolithic stochastic
reward net, an approximate folded net, an ODE fluid model, and a
discrete-event mobility simulator.
"""

__version__ = "0.1.0"
