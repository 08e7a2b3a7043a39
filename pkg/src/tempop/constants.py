"""Physical constants (CODATA 2022) and unit-system conventions.

All SI-mode numbers in the package are derived from the table below so the
CLI can echo it verbatim next to its results.
"""

HBAR = 1.054571817e-34  # J s
K_B = 1.380649e-23  # J / K, exact
ATOMIC_MASS_UNIT = 1.66053906892e-27  # kg
TERAHERTZ = 1.0e12

DIMENSIONLESS = "dimensionless"
SI = "si"
UNIT_SYSTEMS = (DIMENSIONLESS, SI)

CODATA_TABLE = {
    "source": "CODATA 2022",
    "hbar_J_s": HBAR,
    "k_B_J_per_K": K_B,
    "atomic_mass_unit_kg": ATOMIC_MASS_UNIT,
}


def check_unit_system(unit_system):
    # "natural" is accepted as an alias on the command line
    if unit_system == "natural":
        return DIMENSIONLESS
    if unit_system not in UNIT_SYSTEMS:
        from .errors import DomainError

        raise DomainError(f"unknown unit system {unit_system!r}; expected one of {UNIT_SYSTEMS}")
    return unit_system


def boltzmann(unit_system):
    """Return k_B for ``unit_system`` (1 in dimensionless mode)."""
    return K_B if check_unit_system(unit_system) == SI else 1.0


def reduced_planck(unit_system):
    """Return hbar for ``unit_system`` (1 in dimensionless mode)."""
    return HBAR if check_unit_system(unit_system) == SI else 1.0
