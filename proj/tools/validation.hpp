#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pbw/link_model.hpp"

namespace pbw::cli {

enum class CheckStatus { kPass, kFail, kKnownDiscrepancy };

struct ValidationCheck {
  std::string name;
  CheckStatus status;
  std::string detail;
};

/// Replaceable pieces of the pipeline, so a suite run can be pointed at a
/// deliberately broken implementation.
struct ValidationHooks {
  /// E[W^2] for symmetric links; defaults to the closed-form second moment.
  std::function<Eigen::MatrixXd(const Eigen::MatrixXd&, const LinkModel<double>&)> second_moment;
};

std::vector<ValidationCheck> run_validation(const ValidationHooks& hooks = {});

/// True when no check has status kFail.
bool validation_passed(const std::vector<ValidationCheck>& checks);

std::string status_label(CheckStatus s);

}  // namespace pbw::cli
