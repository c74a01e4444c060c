"""surroflow: a desk-scale lab for surrogate modelling of traffic policies.

Generates synthetic grid cities, computes equilibrium link volumes with a
successive-averages assignment oracle, and trains a dual-graph neural
network to predict per-segment volume changes caused by capacity-reduction
policies.
"""

__version__ = "0.1.0"
