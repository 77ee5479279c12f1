"""Repeated-Ramsey correlator analytics and Monte-Carlo simulation for qubit frequency noise."""

from ramsey_noise.core import (
    Colored,
    ExpCorrelated,
    OneOverF,
    Tabulated,
    White,
    ConfigError,
    CorrelatorEstimate,
    NumericalError,
    OutcomeSeries,
    PhaseCorrelators,
    RamseyProtocol,
    ResourceCapError,
    TlsEnsemble,
    TlsParams,
    mean_frequency_shift,
    ramsey_probability,
    tls_ladder,
    tls_stationary,
)

__all__ = [
    "Colored",
    "ConfigError",
    "CorrelatorEstimate",
    "ExpCorrelated",
    "NumericalError",
    "OneOverF",
    "OutcomeSeries",
    "PhaseCorrelators",
    "RamseyProtocol",
    "ResourceCapError",
    "Tabulated",
    "TlsEnsemble",
    "TlsParams",
    "White",
    "mean_frequency_shift",
    "ramsey_probability",
    "tls_ladder",
    "tls_stationary",
]

__version__ = "0.1.0"
