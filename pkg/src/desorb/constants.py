"""Physical constants (CODATA 2018) and exact unit conversions.

SI units are used everywhere in this package; nothing here is configurable.
"""

# Reduced Planck constant [J s]
HBAR = 1.054571817e-34

# Boltzmann constant [J/K]
KB = 1.380649e-23

# 1 Torr l / (cm^2 s)  ->  Pa m^3 / (s m^2).
# 1 Torr = 101325/760 Pa, 1 l = 1e-3 m^3, 1/cm^2 = 1e4/m^2.
TORR_L_PER_CM2_S = (101325.0 / 760.0) * 1e-3 * 1e4
