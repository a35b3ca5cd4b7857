#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mixflow {

/// Head-vehicle velocity profile plus the run parameters that define one
/// closed-loop simulation.
struct Scenario {
  std::string name = "custom";
  std::function<double(double)> head_velocity;  // m/s, defined on [0, duration]
  double duration = 30.0;                       // s, multiple of dt
  double v0_star = 15.0;                        // initial equilibrium velocity
  double noise_amplitude = 0.1;                 // HDV acceleration noise, m/s^2
  int delay_steps = 0;                          // measurement delay on the disturbance
  std::uint64_t seed = 1;

  void validate(double dt) const;
};

/// Periodic wave: 15 + 5 sin(0.2 pi t).
Scenario make_sinusoid(double duration = 30.0);

/// Emergency braking: cruise at 15, brake at -5 m/s^2 down to 5, hold,
/// accelerate back at +2 m/s^2, then cruise.
Scenario make_braking(double pre_s = 3.0, double hold_s = 10.0, double accel_back = 2.0,
                      double tail_s = 4.0);

/// Tabulated drive-cycle profile loaded from a time/velocity CSV with linear
/// interpolation between knots. Throws if the file is missing or malformed.
Scenario make_nedc(const std::string& csv_path);

std::vector<std::string> builtin_scenario_names();

/// Builds one of {"sinusoid", "braking", "nedc"}; the NEDC profile needs the
/// bundled data file path.
Scenario builtin_scenario(const std::string& name, const std::string& nedc_path = "");

}  // namespace mixflow
