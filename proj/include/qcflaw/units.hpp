#pragma once

namespace qcflaw::units {

// Energies are in units of eps = k_B * 200 mK, times in hbar / eps.
inline constexpr double kEnergyScaleKelvin = 0.2;
inline constexpr double kHbar = 1.054571817e-34;     // J s
inline constexpr double kBoltzmann = 1.380649e-23;   // J / K

// hbar / eps in nanoseconds (~0.0382 ns).
inline constexpr double kTimeUnitNs = kHbar / (kBoltzmann * kEnergyScaleKelvin) * 1e9;

inline constexpr double to_ns(double t_scaled) { return t_scaled * kTimeUnitNs; }

}  // namespace qcflaw::units
