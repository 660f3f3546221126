"""Stochastic transport of differential forms by rough drifts.

Submodules:
    forms            multi-index storage, wedge product, pairing, compounds
    fields           vector and k-form fields, grids, norms
    lie              Lie derivatives, adjoints, mollified commutators
    flow             Brownian paths and Stratonovich flow integration
    transport        push-forwards, charts, weak residuals, expectation checks
    counterexamples  closed-form Hölder fixtures
    runner, cli      experiment configuration and command line
"""

from .forms import FormError, FormValue, MultiVectorValue, wedge, pairing, sharp, flat
from .fields import VectorField, KFormField, TestForm, Grid, QuadratureGrid, GridKForm
from .flow import BrownianPath, sample_brownian, integrate_flow, inverse_flow

__all__ = [
    "FormError", "FormValue", "MultiVectorValue", "wedge", "pairing", "sharp", "flat",
    "VectorField", "KFormField", "TestForm", "Grid", "QuadratureGrid", "GridKForm",
    "BrownianPath", "sample_brownian", "integrate_flow", "inverse_flow",
]
__version__ = "0.1.0"
