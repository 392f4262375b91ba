#include "fracorder/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>

namespace fracorder {

std::string format_real(double v) {
  char buf[40];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

namespace {

bool parse_full_double(std::string_view v, double& out) {
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  return ec == std::errc() && p == v.data() + v.size() && !v.empty();
}

std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

bool starts_with(const std::string& s, std::string_view prefix) {
  return s.size() >= prefix.size() && std::string_view(s).substr(0, prefix.size()) == prefix;
}

void write_file(const std::string& path, const std::string& body, const char* what) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), std::string(what) + ": cannot open '" + path + "' for writing");
  out << body;
  out.flush();
  require(out.good(), std::string(what) + ": write to '" + path + "' failed");
}

}  // namespace

std::string trace_csv(const TraceSeries& trace,
                      const std::vector<std::pair<std::string, std::string>>& meta) {
  trace.validate();
  std::string out = "# fracorder-trace v1\n";
  out += "# x0: " + format_real(trace.x0) + "\n";
  out += "# window: " + format_real(trace.window_t0) + " " + format_real(trace.window_t1) + "\n";
  for (const auto& [k, v] : meta) out += "# " + k + ": " + v + "\n";
  out += "t,value\n";
  for (std::size_t i = 0; i < trace.times.size(); ++i)
    out += format_real(trace.times[i]) + "," + format_real(trace.values[i]) + "\n";
  return out;
}

void write_trace_csv(const std::string& path, const TraceSeries& trace,
                     const std::vector<std::pair<std::string, std::string>>& meta) {
  write_file(path, trace_csv(trace, meta), "trace");
}

TraceSeries read_trace_csv(std::istream& in) {
  const std::vector<std::string> lines = read_lines(in);
  require(!lines.empty(), "trace: empty input");
  require(lines[0] == "# fracorder-trace v1", "trace: missing '# fracorder-trace v1' header");

  TraceSeries tr;
  bool have_window = false;
  std::size_t i = 1;
  for (; i < lines.size(); ++i) {
    const std::string& ln = lines[i];
    if (ln.empty()) continue;
    if (ln[0] != '#') break;
    if (starts_with(ln, "# x0: ")) {
      require(parse_full_double(std::string_view(ln).substr(6), tr.x0),
              "trace: malformed x0 metadata line");
    } else if (starts_with(ln, "# window: ")) {
      const std::string_view rest = std::string_view(ln).substr(10);
      const std::size_t sp = rest.find(' ');
      require(sp != std::string_view::npos &&
                  parse_full_double(rest.substr(0, sp), tr.window_t0) &&
                  parse_full_double(rest.substr(sp + 1), tr.window_t1),
              "trace: malformed window metadata line");
      have_window = true;
    }
    // other '#' lines are free-form metadata
  }
  require(i < lines.size() && lines[i] == "t,value", "trace: missing 't,value' column header");

  for (++i; i < lines.size(); ++i) {
    const std::string& ln = lines[i];
    if (ln.empty() || ln[0] == '#') continue;
    const std::size_t comma = ln.find(',');
    double t = 0.0, v = 0.0;
    if (comma == std::string::npos ||
        !parse_full_double(std::string_view(ln).substr(0, comma), t) ||
        !parse_full_double(std::string_view(ln).substr(comma + 1), v))
      throw PreconditionError("trace: bad row at line " + std::to_string(i + 1) + ": '" + ln + "'");
    tr.times.push_back(t);
    tr.values.push_back(v);
  }

  require(tr.times.size() >= 4, "trace: only " + std::to_string(tr.times.size()) +
                                    " samples — file truncated?");
  require(tr.times.front() > 0.0, "trace: times must be positive");
  for (std::size_t k = 0; k + 1 < tr.times.size(); ++k)
    require(tr.times[k] < tr.times[k + 1], "trace: times must be strictly increasing");
  if (!have_window) {
    tr.window_t0 = tr.times.front();
    tr.window_t1 = tr.times.back();
  }
  return tr;
}

TraceSeries read_trace_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "trace: cannot open '" + path + "'");
  return read_trace_csv(in);
}

std::string eigs_csv(const EigenSystem& eigs, const WeylFit* weyl) {
  std::string out = "# fracorder-eigs v1\n";
  out += std::string("# bc: ") +
         (eigs.bc == BoundaryCondition::Dirichlet ? "dirichlet" : "neumann") + "\n";
  out += "# dim: " + std::to_string(eigs.dim) + "\n";
  if (weyl) {
    out += "# weyl: slope " + format_real(weyl->slope) + " expected " +
           format_real(weyl->expected) + " c0 " + format_real(weyl->c0) + " c1 " +
           format_real(weyl->c1) + (weyl->pass ? " pass" : " fail") + "\n";
  }
  out += "lambda,sigma,error_estimate\n";
  for (std::size_t k = 0; k < eigs.count(); ++k) {
    const double sigma = k < eigs.sigmas.size() ? eigs.sigmas[k] : 0.0;
    const double err = k < eigs.error_estimates.size() ? eigs.error_estimates[k] : 0.0;
    out += format_real(eigs.lambdas[k]) + "," + format_real(sigma) + "," + format_real(err) + "\n";
  }
  return out;
}

std::string phis_csv(const EigenSystem& eigs) {
  std::string out = "# fracorder-phis v1\n";
  out += eigs.dim == 2 ? "x,y" : "x";
  for (std::size_t k = 1; k <= eigs.count(); ++k) out += ",phi_" + std::to_string(k);
  out += '\n';
  if (eigs.dim == 2) {
    const std::size_t nx = eigs.mesh.size();
    for (std::size_t iy = 0; iy < eigs.mesh_y.size(); ++iy)
      for (std::size_t ix = 0; ix < nx; ++ix) {
        out += format_real(eigs.mesh[ix]) + "," + format_real(eigs.mesh_y[iy]);
        for (const auto& phi : eigs.phis) out += "," + format_real(phi[iy * nx + ix]);
        out += '\n';
      }
  } else {
    for (std::size_t ix = 0; ix < eigs.mesh.size(); ++ix) {
      out += format_real(eigs.mesh[ix]);
      for (const auto& phi : eigs.phis) out += "," + format_real(phi[ix]);
      out += '\n';
    }
  }
  return out;
}

std::string result_document(const IdentificationResult& result, const ConfigDoc& config) {
  ConfigDoc body;
  body.set("n", ConfigValue::integer(result.n));
  body.set("orders", ConfigValue::real_array(result.orders));
  body.set("weights", ConfigValue::real_array(result.weights));
  body.set("residual", ConfigValue::real(result.residual));
  body.set("sensitivity", ConfigValue::real_array(result.per_parameter_sensitivity));
  body.set("warning", ConfigValue::string(result.warning));
  body.set("diagnostics", ConfigValue::string_array(result.diagnostics));
  for (const auto& [k, v] : config.entries()) body.set("config." + k, v);
  return "# fracorder-result v1\n" + body.serialize();
}

double Tabulated::eval(double x) const {
  require(xs.size() >= 2, "tabulated: need at least two samples");
  require(x >= xs.front() && x <= xs.back(), "tabulated: x outside the tabulated range");
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const std::size_t hi = std::min(static_cast<std::size_t>(it - xs.begin()), xs.size() - 1);
  const std::size_t lo = hi == 0 ? 0 : hi - 1;
  if (hi == lo) return values[lo];
  const double w = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return values[lo] + w * (values[hi] - values[lo]);
}

std::vector<double> Tabulated::sample(const std::vector<double>& xs_out) const {
  std::vector<double> out(xs_out.size());
  for (std::size_t i = 0; i < xs_out.size(); ++i) out[i] = eval(xs_out[i]);
  return out;
}

Tabulated read_tabulated(std::istream& in) {
  Tabulated tab;
  const std::vector<std::string> lines = read_lines(in);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& ln = lines[i];
    if (ln.empty() || ln[0] == '#') continue;
    if (tab.xs.empty() && ln == "x,value") continue;  // optional column header
    const std::size_t comma = ln.find(',');
    double x = 0.0, v = 0.0;
    if (comma == std::string::npos ||
        !parse_full_double(std::string_view(ln).substr(0, comma), x) ||
        !parse_full_double(std::string_view(ln).substr(comma + 1), v))
      throw PreconditionError("tabulated: bad row at line " + std::to_string(i + 1) + ": '" +
                              ln + "'");
    if (!tab.xs.empty())
      require(x > tab.xs.back(), "tabulated: x must be strictly increasing");
    tab.xs.push_back(x);
    tab.values.push_back(v);
  }
  require(tab.xs.size() >= 2, "tabulated: need at least two samples");
  return tab;
}

Tabulated read_tabulated_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "tabulated: cannot open '" + path + "'");
  return read_tabulated(in);
}

}  // namespace fracorder
