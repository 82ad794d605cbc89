"""Mechanisms that implement social choice rules in correlated equilibria, with LP verification
and regret-matching dynamics."""
from .env import SCC, SCF, DomainError, Environment, Outcome, compound, expected_utility, mixture

__all__ = ["SCC", "SCF", "DomainError", "Environment", "Outcome", "compound", "expected_utility", "mixture"]
