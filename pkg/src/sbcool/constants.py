"""Physical constants (CODATA 2018) used throughout the package."""

import math

HBAR = 1.054571817e-34  # J s
ATOMIC_MASS_UNIT = 1.66053906660e-27  # kg
TWO_PI = 2.0 * math.pi

# Lamb-Dicke validity: the first-order rate model is trusted for eta_ld_sq * <n> below this
LAMB_DICKE_WARN = 0.5
