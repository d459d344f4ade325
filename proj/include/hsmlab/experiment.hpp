#pragma once

#include <functional>
#include <stdexcept>
#include <string>

#include "hsmlab/config.hpp"
#include "hsmlab/report.hpp"

namespace hsmlab {

/// A checked invariant came out negative (CLI exit code 2).
class InvariantViolation : public std::runtime_error {
 public:
  InvariantViolation(const std::string& invariant, double margin, const std::string& detail);
  const std::string& invariant() const { return invariant_; }
  double margin() const { return margin_; }

 private:
  std::string invariant_;
  double margin_;
};

struct ExperimentHooks {
  /// Sees every invariant margin (the invariant holds iff margin >= 0) before
  /// it is checked, and returns the value to check. Tests use it to inject
  /// a falsified invariant.
  std::function<double(const std::string& invariant, double margin)> margin;
};

/// Runs the configured experiment over its ladder and returns the report:
///   toolkit, version, experiment, config (resolved), rows, summary, tables.
/// Throws InvariantViolation or FalsificationError on a falsified invariant,
/// ConfigError on inputs only detectable at run time (e.g. a test function
/// touching K), std::runtime_error on solver failure.
ReportDocument run_experiment(const ExperimentConfig& config, const ExperimentHooks& hooks = {});

/// Process exit code for an experiment failure: 1 for configuration or input
/// errors, 2 for a falsified invariant, 3 for anything else.
int exit_code(const std::exception& error);

/// Writes the JSON report to config.output_json and the CSV tables next to
/// config.output_csv.
void write_outputs(const ReportDocument& doc, const ExperimentConfig& config);

}  // namespace hsmlab
