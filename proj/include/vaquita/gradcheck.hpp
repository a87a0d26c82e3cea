#pragma once

#include <string>
#include <vector>

namespace vaquita::gradcheck {

struct GroupReport {
  std::string group;
  double max_rel_err = 0.0;
};

struct Report {
  std::vector<GroupReport> groups;
  double worst() const;
  bool pass(double threshold) const { return worst() < threshold; }
};

inline constexpr double kThreshold = 1e-4;

/// Compares reverse-mode gradients against central differences with step h
/// on tiny seeded configurations. `module` is one of tensor, perceiver,
/// vqformer, model or all; the worst relative error per parameter group is
/// taken across `seeds` seeds. `corrupt` is a test hook that perturbs one
/// analytic gradient so the comparison must fail.
Report run(const std::string& module, double h, int seeds,
           bool corrupt = false);

}  // namespace vaquita::gradcheck
