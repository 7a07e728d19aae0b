"""Thomas-Fermi theories of atoms in strong magnetic fields, lowest Landau band."""
from __future__ import annotations

__version__ = "0.1.0"

from .grids import RadialGrid, UniformGrid
from .kernels import KernelTable, build_kernel_table, orbital_density, v_pair, v_single
from .spectral1d import counting, negative_spectrum, sum_neg
from .stf import EnergyReport, RadialDensity, solve_stf, stf_energy, support_radius
from .dstf import (ChannelDensity, critical_particle_number, dstf_functional, mstf_energy, solve_1dstf,
                   solve_dstf, weak_1d_energy)
from .trace import (TraceReport, channel_potential, counting_difference, error_scaling_sweep, quantum_trace,
                    semiclassical_trace, tilde_potential)

__all__ = [
    "RadialGrid", "UniformGrid", "KernelTable", "build_kernel_table", "orbital_density", "v_pair", "v_single",
    "counting", "negative_spectrum", "sum_neg", "EnergyReport", "RadialDensity", "solve_stf", "stf_energy",
    "support_radius", "ChannelDensity", "critical_particle_number", "dstf_functional", "mstf_energy",
    "solve_1dstf", "solve_dstf", "weak_1d_energy", "TraceReport", "channel_potential", "counting_difference",
    "error_scaling_sweep", "quantum_trace", "semiclassical_trace", "tilde_potential",
]
