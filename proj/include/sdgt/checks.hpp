#pragma once

#include <string>
#include <vector>

namespace sdgt {

struct CheckResult {
  std::string id;      // e.g. "A6" for acceptance criterion 6
  std::string name;
  bool passed = false;
  std::string detail;  // measured values behind the verdict
  double seconds = 0.0;
  double budget_seconds = 0.0;  // 0: no runtime limit
};

// "invariants", "reductions", "oracles", "acceptance".
std::vector<std::string> suite_names();

// Runs a suite; unknown names raise sdgt::Error(kInvalidArgument). A check
// that throws is reported as failed with the error message as detail.
std::vector<CheckResult> run_suite(const std::string& suite);

// One line per check: "PASS|FAIL  id  name  (seconds)  detail".
std::string format_report(const std::string& suite, const std::vector<CheckResult>& results);

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace sdgt
