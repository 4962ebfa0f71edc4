"""Toolkit for local output regulation of nonlinear SISO systems.

Subpackages: expression parsing (expr), system models and linearization
(model), spectral analysis (specan), internal-model controller synthesis
(synth), regulator equations and the boost-converter solver (regeq),
closed-loop simulation (sim), system file I/O (sysfile), built-in worked
examples (examples) and the command line interface (cli).
"""

__version__ = "0.1.0"
