#include "mixflow/scenario.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace mixflow {

void Scenario::validate(double dt) const {
  if (!head_velocity) throw std::invalid_argument("Scenario: missing velocity profile");
  if (duration < 0.0) throw std::invalid_argument("Scenario: negative duration");
  const double steps = duration / dt;
  if (std::abs(steps - std::round(steps)) > 1e-6)
    throw std::invalid_argument("Scenario: duration must be a multiple of dt");
}

Scenario make_sinusoid(double duration) {
  Scenario s;
  s.name = "sinusoid";
  s.duration = duration;
  s.v0_star = 15.0;
  s.head_velocity = [](double t) { return 15.0 + 5.0 * std::sin(0.2 * M_PI * t); };
  return s;
}

Scenario make_braking(double pre_s, double hold_s, double accel_back, double tail_s) {
  Scenario s;
  s.name = "braking";
  const double t1 = pre_s;              // braking starts
  const double t2 = t1 + 10.0 / 5.0;    // 15 -> 5 at -5 m/s^2
  const double t3 = t2 + hold_s;        // hold at 5
  const double t4 = t3 + 10.0 / accel_back;  // back to 15
  s.duration = t4 + tail_s;
  s.v0_star = 15.0;
  s.head_velocity = [=](double t) {
    if (t < t1) return 15.0;
    if (t < t2) return 15.0 - 5.0 * (t - t1);
    if (t < t3) return 5.0;
    if (t < t4) return 5.0 + accel_back * (t - t3);
    return 15.0;
  };
  return s;
}

Scenario make_nedc(const std::string& csv_path) {
  std::ifstream f(csv_path);
  if (!f) throw std::runtime_error("make_nedc: cannot open profile file " + csv_path);
  auto times = std::make_shared<std::vector<double>>();
  auto vels = std::make_shared<std::vector<double>>();
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string a, b;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ','))
      throw std::runtime_error("make_nedc: malformed row in " + csv_path);
    times->push_back(std::stod(a));
    vels->push_back(std::stod(b));
  }
  if (times->size() < 2) throw std::runtime_error("make_nedc: profile needs at least two knots");
  for (std::size_t i = 1; i < times->size(); ++i)
    if ((*times)[i] <= (*times)[i - 1])
      throw std::runtime_error("make_nedc: time column must be strictly increasing");

  Scenario s;
  s.name = "nedc";
  s.duration = times->back();
  s.v0_star = vels->front();
  s.head_velocity = [times, vels](double t) {
    if (t <= times->front()) return vels->front();
    if (t >= times->back()) return vels->back();
    std::size_t hi = 1;
    while ((*times)[hi] < t) ++hi;
    const double w = (t - (*times)[hi - 1]) / ((*times)[hi] - (*times)[hi - 1]);
    return (1.0 - w) * (*vels)[hi - 1] + w * (*vels)[hi];
  };
  return s;
}

std::vector<std::string> builtin_scenario_names() { return {"sinusoid", "braking", "nedc"}; }

Scenario builtin_scenario(const std::string& name, const std::string& nedc_path) {
  if (name == "sinusoid") return make_sinusoid();
  if (name == "braking") return make_braking();
  if (name == "nedc") return make_nedc(nedc_path);
  throw std::invalid_argument("builtin_scenario: unknown scenario " + name);
}

}  // namespace mixflow
