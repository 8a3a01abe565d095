"""Classical N-body model of the long-range theta-spin system."""

from . import kernels
from .dynamics import (
    Diagnostics,
    Leapfrog,
    alignment_cosine,
    coupling_energy,
    diagnostics,
    exclude_evaporated,
    iter_spin_relax,
    one_particle_energies,
    one_particle_energy,
    potential_energy,
    spin_relax,
    step_leapfrog,
    total_energy,
)
from .particles import (
    ParticleSet,
    PhaseBox,
    SimConfig,
    ThetaParticle,
    dynamical_time,
    init_waterbag,
)
from .statistics import (
    LyndenBellFit,
    LyndenBellParams,
    PhaseSpaceHistogram,
    coarse_grain,
    fermi_ground_state,
    fit_lynden_bell,
    lynden_bell,
)

__all__ = [
    "Diagnostics", "Leapfrog", "LyndenBellFit", "LyndenBellParams", "ParticleSet",
    "PhaseBox", "PhaseSpaceHistogram", "SimConfig", "ThetaParticle", "alignment_cosine",
    "coarse_grain", "coupling_energy", "diagnostics", "dynamical_time", "exclude_evaporated",
    "fermi_ground_state", "fit_lynden_bell", "init_waterbag", "iter_spin_relax", "kernels",
    "lynden_bell", "one_particle_energies", "one_particle_energy", "potential_energy",
    "spin_relax", "step_leapfrog", "total_energy",
]
