"""Toy language-conditioned UAV tracking: simulator, APF expert, dataset tools, flow-matching policy, evaluation."""

__version__ = "0.1.0"
