#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace biharm::corpus {

struct Options {
  std::uint64_t seed = 7;
  /// Passed to the Bochner row's stencil; nonzero is a negative control.
  double mutation = 0.0;
};

/// One acceptance row. `value` is the headline measurement and `bound` its limit;
/// `pass` also requires every secondary condition listed in `detail` and the time limit.
struct Row {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
  double limit = 0.0;
};

struct Check {
  std::string name;
  std::string summary;
  double limit = 0.0;  // seconds
  std::function<Row(const Options&)> run;
};

/// The closed-form regression corpus, one check per acceptance criterion.
const std::vector<Check>& checks();

/// Runs the selected checks (all when empty) in corpus order and reports each row as it
/// completes. Throws ParameterError for unknown names; any other exception propagates
/// with the rows finished so far already reported.
std::vector<Row> run(const std::vector<std::string>& names, const Options& opt,
                     const std::function<void(const Row&)>& on_row = {});

/// CSV: name,value,bound,pass,detail. Timings are left out so reruns compare byte for byte.
void write_csv(std::ostream& out, const std::vector<Row>& rows);

}  // namespace biharm::corpus
