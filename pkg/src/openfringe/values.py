"""Scalar values carrying a one-sigma uncertainty."""

from __future__ import annotations

from typing import NamedTuple


class Measurement(NamedTuple):
    """A central value together with its standard error.

    Used throughout the fitting and extraction chain, where every number
    (fitted amplitude, contrast, damping rate) travels with a first-order
    propagated uncertainty.  ``sigma`` defaults to zero for exact inputs.
    """

    value: float
    sigma: float = 0.0

    def pulls(self, reference: float = 0.0) -> float:
        """Distance from ``reference`` in units of sigma (inf if sigma is 0)."""
        gap = abs(self.value - reference)
        if self.sigma == 0.0:
            return 0.0 if gap == 0.0 else float("inf")
        return gap / self.sigma
