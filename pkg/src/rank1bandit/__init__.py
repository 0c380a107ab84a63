"""Stochastic rank-1 bandits: Rank1Elim, baselines, lower bounds, simulator."""
