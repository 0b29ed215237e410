"""Certified lower bounds on conditional entropies for untrusted-device protocols.

The toolbox turns observed measurement statistics (full tables or Bell-type
functionals) into certified lower bounds on conditional von Neumann entropies,
and from those into asymptotic one-way key rates.  Every reported number is
backed by a rigorously verified dual certificate of the underlying semidefinite
relaxation, so it remains a valid bound even when the numerical solver is
imperfect.
"""

__version__ = "0.1.0"
