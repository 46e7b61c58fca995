// Runs the twelve acceptance criteria and prints one line per criterion.
#include <iostream>

#include "sdgt/checks.hpp"

int main() {
  const auto results = sdgt::run_suite("acceptance");
  std::cout << sdgt::format_report("acceptance", results);
  return sdgt::all_passed(results) ? 0 : 1;
}
