"""Spectral bands, Lyapunov exponents and localization diagnostics for periodic
approximations of one-dimensional ergodic Schroedinger operators."""

__version__ = "0.1.0"

from .errors import CertificationError, ErgobandsError, NearSingularError, PrecisionError, ValidationError
from .floquet import Band, EigenPair, bands, char_poly_value, discriminant, eigenpairs, eigenvalues, eigenvector
from .lyapunov import LyapunovCurve, lyapunov_birkhoff, lyapunov_iid_mc
from .potential import DistributionSpec, PotentialSeq, Rational, cf_convergents, explicit, quasiperiodic_seq, sample_iid

__all__ = [
    "Band", "CertificationError", "DistributionSpec", "EigenPair", "ErgobandsError", "LyapunovCurve",
    "NearSingularError", "PotentialSeq", "PrecisionError", "Rational", "ValidationError", "bands",
    "cf_convergents", "char_poly_value", "discriminant", "eigenpairs", "eigenvalues", "eigenvector", "explicit",
    "lyapunov_birkhoff", "lyapunov_iid_mc", "quasiperiodic_seq", "sample_iid",
]
