#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fracorder/config.hpp"
#include "fracorder/forward.hpp"
#include "fracorder/inverse.hpp"
#include "fracorder/spectral.hpp"

namespace fracorder {

// All writers format reals in shortest round-trip decimal form and emit '\n'
// line endings, so identical inputs produce byte-identical files.

// Trace CSV:
//   # fracorder-trace v1
//   # x0: <real>
//   # window: <t0> <t1>
//   # <key>: <free text>          optional extra metadata, order preserved
//   t,value
//   <t>,<value>
std::string trace_csv(const TraceSeries& trace,
                      const std::vector<std::pair<std::string, std::string>>& meta = {});
void write_trace_csv(const std::string& path, const TraceSeries& trace,
                     const std::vector<std::pair<std::string, std::string>>& meta = {});

// Rejects a missing/foreign header, any unparseable row, non-increasing
// times, and traces shorter than four samples (truncated file).
TraceSeries read_trace_csv(std::istream& in);
TraceSeries read_trace_file(const std::string& path);

// Eigensystem bundle, two CSVs:
//   modes:  # fracorder-eigs v1  /  lambda,sigma,error_estimate
//   phis:   x[,y],phi_1..phi_n   eigenfunction samples on the mesh
std::string eigs_csv(const EigenSystem& eigs, const WeylFit* weyl = nullptr);
std::string phis_csv(const EigenSystem& eigs);

// Identification result document: `# fracorder-result v1` followed by a flat
// key=value body (n, orders, weights, residual, sensitivity, warning,
// diagnostics) and the full run config echoed under `config.`.  The body
// parses back with ConfigDoc::parse.
std::string result_document(const IdentificationResult& result, const ConfigDoc& config);

// Two-column (x, value) CSV for tabulated coefficients; '#' comments allowed,
// x strictly increasing.  eval is linear interpolation; x outside the
// tabulated range is a PreconditionError.
struct Tabulated {
  std::vector<double> xs;
  std::vector<double> values;

  double eval(double x) const;
  std::vector<double> sample(const std::vector<double>& xs_out) const;
};

Tabulated read_tabulated(std::istream& in);
Tabulated read_tabulated_file(const std::string& path);

// Shortest-round-trip decimal rendering shared by every writer.
std::string format_real(double v);

}  // namespace fracorder
