"""Continuous-variable quantum digital signatures: simulation and security analysis.

Modules: :mod:`~cvqds.gf2poly` (GF(2) polynomials), :mod:`~cvqds.toeplitz`
(LFSR Toeplitz hashing), :mod:`~cvqds.otuh` (three-party signing),
:mod:`~cvqds.channel` (coherent-state channel and sampler),
:mod:`~cvqds.bounds` (finite-size security bounds), :mod:`~cvqds.rate`
(signature-rate engine) and :mod:`~cvqds.cli`.
"""
from __future__ import annotations

from .bits import FixedBits, InsufficientRandomness, RandomBits
from .bounds import DualCoeffs, FiniteSizeBudget, operator_bound_B
from .channel import ChannelModel, FidelityTestFn, PulseParams, expected_stats, run_distribution
from .gf2poly import Gf2Poly, is_irreducible, random_irreducible
from .otuh import KeyBundle, MessagePacket, keygen_split, run_protocol, sign, verify
from .rate import ProtocolParams, optimize_point, rate_curve, rate_pipeline
from .toeplitz import HashSpec, toeplitz_hash

__version__ = "0.1.0"

__all__ = [
    "ChannelModel",
    "DualCoeffs",
    "FidelityTestFn",
    "FiniteSizeBudget",
    "FixedBits",
    "Gf2Poly",
    "HashSpec",
    "InsufficientRandomness",
    "KeyBundle",
    "MessagePacket",
    "ProtocolParams",
    "PulseParams",
    "RandomBits",
    "expected_stats",
    "is_irreducible",
    "keygen_split",
    "operator_bound_B",
    "optimize_point",
    "random_irreducible",
    "rate_curve",
    "rate_pipeline",
    "run_distribution",
    "run_protocol",
    "sign",
    "toeplitz_hash",
    "verify",
]
