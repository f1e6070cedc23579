"""Verification toolkit for the infinite-horizon Merton investment-consumption problem."""

from .closed_form import (BankruptcyValue, ClosedFormSolution, F, bankruptcy_value,
                          constant_policy_value, davis_norman_value, klss_nu, klss_value,
                          merton_solution, perturbed_value)
from .errors import (ConcavityError, IllPosedError, ParameterError, PolicyError,
                     RootFindingError)
from .market import (AgentParams, MarketParams, Posedness, WellPosedness, classify, eta,
                     eta_from_impatience, impatience_rate, kappa, numeraire_shift)

__all__ = [
    "AgentParams", "BankruptcyValue", "ClosedFormSolution", "ConcavityError", "F",
    "IllPosedError", "MarketParams", "ParameterError", "PolicyError", "Posedness",
    "RootFindingError", "WellPosedness", "bankruptcy_value", "classify",
    "constant_policy_value", "davis_norman_value", "eta", "eta_from_impatience",
    "impatience_rate", "kappa", "klss_nu", "klss_value", "merton_solution",
    "numeraire_shift", "perturbed_value",
]
