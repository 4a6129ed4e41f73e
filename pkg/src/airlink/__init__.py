"""Link-level baseband workbench.

Multipath channel modelling with three receivers on top: a DSSS RAKE, a
cyclic-prefix OFDM modem and an LMS adaptive equalizer. Scenarios are
JSON-configured, seeded and reproducible.
"""

__version__ = "0.1.0"
