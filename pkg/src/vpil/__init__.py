"""Kinetic plasma control workbench.

Simulates the controlled 1D1V Vlasov-Poisson system, observes it through
sparse noisy density sensors, generates full-information expert
demonstrations, trains and deploys partial-observation feedback policies,
and benchmarks their stabilization performance.
"""

__version__ = "0.1.0"
