"""wavekin: desk-scale checks of wave-kinetic behaviour for cubic NLS on generic tori.

Subpackages cover the truncated mode lattice, random-phase data, the
interaction-picture solver, the exact Duhamel tree expansion, the kinetic
collision operator, quasi-resonance counting, and ensemble experiments.
"""

from .lattice import SpectralField, TorusSpec, modes, omega, q_form, sigma_zero_triples

__version__ = "0.1.0"

__all__ = [
    "TorusSpec",
    "SpectralField",
    "modes",
    "q_form",
    "omega",
    "sigma_zero_triples",
    "__version__",
]
