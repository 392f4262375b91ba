#include "fracorder/config.hpp"

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <string_view>

#include "fracorder/expr.hpp"
#include "fracorder/io.hpp"

namespace fracorder {

namespace {

bool key_char(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
         c == '_' || c == '.';
}

std::string_view trim(std::string_view v) {
  while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.remove_prefix(1);
  while (!v.empty() && (v.back() == ' ' || v.back() == '\t')) v.remove_suffix(1);
  return v;
}

[[noreturn]] void bad_line(const std::string& what, int line) {
  throw PreconditionError("config: " + what + " (line " + std::to_string(line) + ")");
}

// Real output keeps its kind on re-parse: bare integers get a '.0' suffix.
std::string render_real(double v) {
  std::string s = format_real(v);
  if (std::isfinite(v) && s.find('.') == std::string::npos && s.find('e') == std::string::npos)
    s += ".0";
  return s;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  out += '"';
  return out;
}

bool parse_full_double(std::string_view v, double& out) {
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  return ec == std::errc() && p == v.data() + v.size() && !v.empty();
}

bool parse_full_integer(std::string_view v, long long& out) {
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  return ec == std::errc() && p == v.data() + v.size() && !v.empty();
}

// Quoted string starting at v[0] == '"'; returns content, sets consumed.
std::string parse_quoted(std::string_view v, std::size_t& consumed, int line) {
  std::string out;
  std::size_t i = 1;
  bool closed = false;
  while (i < v.size()) {
    const char c = v[i];
    if (c == '"') {
      ++i;
      closed = true;
      break;
    }
    if (c == '\\') {
      ++i;
      if (i >= v.size()) bad_line("unterminated escape in string", line);
      switch (v[i]) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        default: bad_line(std::string("bad escape '\\") + v[i] + "' in string", line);
      }
      ++i;
    } else {
      out += c;
      ++i;
    }
  }
  if (!closed) bad_line("unterminated string", line);
  consumed = i;
  return out;
}

ConfigValue parse_array(std::string_view v, int line) {
  // v starts with '['; trailing text was trimmed by the caller
  std::size_t i = 1;
  auto skip = [&] {
    while (i < v.size() && (v[i] == ' ' || v[i] == '\t')) ++i;
  };
  skip();
  if (i < v.size() && v[i] == ']') {
    if (trim(v.substr(i + 1)).empty()) return ConfigValue::real_array({});
    bad_line("trailing text after array", line);
  }
  bool is_string = false, decided = false;
  std::vector<double> reals;
  std::vector<std::string> strings;
  for (;;) {
    skip();
    if (i >= v.size()) bad_line("unterminated array", line);
    if (v[i] == '"') {
      if (decided && !is_string) bad_line("mixed array element types", line);
      decided = true;
      is_string = true;
      std::size_t used = 0;
      strings.push_back(parse_quoted(v.substr(i), used, line));
      i += used;
    } else {
      if (decided && is_string) bad_line("mixed array element types", line);
      decided = true;
      std::size_t end = i;
      while (end < v.size() && v[end] != ',' && v[end] != ']') ++end;
      double d = 0.0;
      if (!parse_full_double(trim(v.substr(i, end - i)), d))
        bad_line("malformed array element '" + std::string(trim(v.substr(i, end - i))) + "'", line);
      reals.push_back(d);
      i = end;
    }
    skip();
    if (i >= v.size()) bad_line("unterminated array", line);
    if (v[i] == ',') {
      ++i;
      continue;
    }
    if (v[i] == ']') {
      ++i;
      break;
    }
    bad_line("expected ',' or ']' in array", line);
  }
  if (!trim(v.substr(i)).empty()) bad_line("trailing text after array", line);
  return is_string ? ConfigValue::string_array(std::move(strings))
                   : ConfigValue::real_array(std::move(reals));
}

ConfigValue parse_value(std::string_view v, int line) {
  if (v.empty()) bad_line("missing value", line);
  if (v == "true") return ConfigValue::boolean(true);
  if (v == "false") return ConfigValue::boolean(false);
  if (v.front() == '"') {
    std::size_t used = 0;
    std::string s = parse_quoted(v, used, line);
    if (!trim(v.substr(used)).empty()) bad_line("trailing text after string", line);
    return ConfigValue::string(std::move(s));
  }
  if (v.front() == '[') return parse_array(v, line);
  long long i = 0;
  if (parse_full_integer(v, i)) return ConfigValue::integer(i);
  double d = 0.0;
  if (parse_full_double(v, d)) return ConfigValue::real(d);
  bad_line("malformed value '" + std::string(v) + "'", line);
}

}  // namespace

ConfigValue ConfigValue::boolean(bool v) {
  ConfigValue c;
  c.kind = Kind::Boolean;
  c.b = v;
  return c;
}

ConfigValue ConfigValue::integer(long long v) {
  ConfigValue c;
  c.kind = Kind::Integer;
  c.i = v;
  return c;
}

ConfigValue ConfigValue::real(double v) {
  ConfigValue c;
  c.kind = Kind::Real;
  c.d = v;
  return c;
}

ConfigValue ConfigValue::string(std::string v) {
  ConfigValue c;
  c.kind = Kind::String;
  c.s = std::move(v);
  return c;
}

ConfigValue ConfigValue::real_array(std::vector<double> v) {
  ConfigValue c;
  c.kind = Kind::RealArray;
  c.reals = std::move(v);
  return c;
}

ConfigValue ConfigValue::string_array(std::vector<std::string> v) {
  ConfigValue c;
  c.kind = Kind::StringArray;
  c.strings = std::move(v);
  return c;
}

double ConfigValue::as_real() const {
  if (kind == Kind::Real) return d;
  if (kind == Kind::Integer) return static_cast<double>(i);
  throw PreconditionError("config: value is not a real");
}

long long ConfigValue::as_integer() const {
  if (kind == Kind::Integer) return i;
  throw PreconditionError("config: value is not an integer");
}

std::string ConfigValue::render() const {
  switch (kind) {
    case Kind::Boolean: return b ? "true" : "false";
    case Kind::Integer: return std::to_string(i);
    case Kind::Real: return render_real(d);
    case Kind::String: return quote(s);
    case Kind::RealArray: {
      std::string out = "[";
      for (std::size_t k = 0; k < reals.size(); ++k) {
        if (k) out += ", ";
        out += render_real(reals[k]);
      }
      out += ']';
      return out;
    }
    case Kind::StringArray: {
      std::string out = "[";
      for (std::size_t k = 0; k < strings.size(); ++k) {
        if (k) out += ", ";
        out += quote(strings[k]);
      }
      out += ']';
      return out;
    }
  }
  return {};  // unreachable
}

bool ConfigValue::operator==(const ConfigValue& o) const {
  if (kind != o.kind) return false;
  switch (kind) {
    case Kind::Boolean: return b == o.b;
    case Kind::Integer: return i == o.i;
    case Kind::Real: return d == o.d;
    case Kind::String: return s == o.s;
    case Kind::RealArray: return reals == o.reals;
    case Kind::StringArray: return strings == o.strings;
  }
  return false;
}

ConfigDoc ConfigDoc::parse(const std::string& text) {
  ConfigDoc doc;
  int line_no = 0;
  for (std::size_t start = 0; start < text.size();) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const std::string_view sv = trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    const std::size_t eq = sv.find('=');
    if (eq == std::string_view::npos) bad_line("expected 'key = value'", line_no);
    const std::string_view keyv = trim(sv.substr(0, eq));
    if (keyv.empty()) bad_line("empty key", line_no);
    for (char c : keyv)
      if (!key_char(c)) bad_line("bad key character '" + std::string(1, c) + "'", line_no);
    const std::string key(keyv);
    if (doc.has(key)) bad_line("duplicate key '" + key + "'", line_no);
    doc.entries_.emplace_back(key, parse_value(trim(sv.substr(eq + 1)), line_no));
  }
  return doc;
}

ConfigDoc ConfigDoc::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "config: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(text);
}

std::string ConfigDoc::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += " = ";
    out += v.render();
    out += '\n';
  }
  return out;
}

bool ConfigDoc::has(const std::string& key) const { return find(key) != nullptr; }

const ConfigValue* ConfigDoc::find(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return &v;
  return nullptr;
}

void ConfigDoc::set(const std::string& key, ConfigValue v) {
  for (auto& [k, existing] : entries_)
    if (k == key) {
      existing = std::move(v);
      return;
    }
  entries_.emplace_back(key, std::move(v));
}

namespace {

const ConfigValue& fetch(const ConfigDoc& doc, const std::string& key) {
  const ConfigValue* v = doc.find(key);
  if (!v) throw PreconditionError("config: missing key '" + key + "'");
  return *v;
}

[[noreturn]] void wrong_kind(const std::string& key, const char* want) {
  throw PreconditionError("config: key '" + key + "' is not " + want);
}

}  // namespace

bool ConfigDoc::boolean(const std::string& key) const {
  const ConfigValue& v = fetch(*this, key);
  if (v.kind != ConfigValue::Kind::Boolean) wrong_kind(key, "a boolean");
  return v.b;
}

bool ConfigDoc::boolean(const std::string& key, bool def) const {
  return has(key) ? boolean(key) : def;
}

long long ConfigDoc::integer(const std::string& key) const {
  const ConfigValue& v = fetch(*this, key);
  if (v.kind != ConfigValue::Kind::Integer) wrong_kind(key, "an integer");
  return v.i;
}

long long ConfigDoc::integer(const std::string& key, long long def) const {
  return has(key) ? integer(key) : def;
}

double ConfigDoc::real(const std::string& key) const {
  const ConfigValue& v = fetch(*this, key);
  if (v.kind == ConfigValue::Kind::Real) return v.d;
  if (v.kind == ConfigValue::Kind::Integer) return static_cast<double>(v.i);
  wrong_kind(key, "a real");
}

double ConfigDoc::real(const std::string& key, double def) const {
  return has(key) ? real(key) : def;
}

const std::string& ConfigDoc::str(const std::string& key) const {
  const ConfigValue& v = fetch(*this, key);
  if (v.kind != ConfigValue::Kind::String) wrong_kind(key, "a string");
  return v.s;
}

std::string ConfigDoc::str(const std::string& key, const std::string& def) const {
  return has(key) ? str(key) : def;
}

std::vector<double> ConfigDoc::reals(const std::string& key) const {
  const ConfigValue& v = fetch(*this, key);
  if (v.kind != ConfigValue::Kind::RealArray) wrong_kind(key, "a real array");
  return v.reals;
}

std::vector<double> ConfigDoc::reals(const std::string& key, std::vector<double> def) const {
  return has(key) ? reals(key) : std::move(def);
}

std::vector<std::string> ConfigDoc::strings(const std::string& key) const {
  const ConfigValue& v = fetch(*this, key);
  if (v.kind != ConfigValue::Kind::StringArray) wrong_kind(key, "a string array");
  return v.strings;
}

RunConfig RunConfig::from_doc(ConfigDoc doc) {
  static constexpr std::string_view known[] = {
      "problem.kind",      "problem.geometry",  "problem.bc",        "problem.ell",
      "problem.ell_y",     "problem.p",         "problem.c",         "problem.p_expr",
      "problem.c_expr",    "problem.p_file",    "problem.c_file",    "problem.mesh_size",
      "problem.modes",     "initial.kind",      "initial.expr",      "initial.file",
      "model.orders",      "model.weights",     "observation.x0",    "observation.t0",
      "observation.t_max", "observation.samples", "observation.geometric",
      "forward.mode_count", "forward.mode_tail_tol", "synth.noise_level", "synth.seed",
      "inverse.n_max",     "inverse.pk_terms",  "inverse.eta_grid",  "inverse.seed",
      "inverse.residual_drop_threshold", "inverse.lsq.max_iter", "inverse.lsq.step_tol",
      "inverse.lsq.residual_tol", "inverse.lsq.damping_init", "laplace.eta_min",
      "laplace.eta_max",   "laplace.points",    "laplace.etas",
  };
  for (const auto& [k, v] : doc.entries()) {
    bool ok = false;
    for (const std::string_view kn : known)
      if (k == kn) {
        ok = true;
        break;
      }
    if (!ok) throw PreconditionError("config: unknown key '" + k + "'");
  }

  RunConfig rc;
  rc.doc = std::move(doc);
  const ConfigDoc& d = rc.doc;

  const std::string kind = d.str("problem.kind", "closed-form");
  if (kind == "fd") {
    rc.closed_form = false;
  } else {
    require(kind == "closed-form", "config: problem.kind must be \"closed-form\" or \"fd\"");
  }

  const std::string geom = d.str("problem.geometry", "interval");
  if (geom == "rectangle") {
    require(rc.closed_form, "config: rectangle geometry needs problem.kind = \"closed-form\"");
    rc.cc.geometry = ConstantCoefficientSpec::Geometry::Rectangle;
  } else {
    require(geom == "interval", "config: problem.geometry must be \"interval\" or \"rectangle\"");
  }

  const std::string bcs = d.str("problem.bc", "dirichlet");
  if (bcs == "neumann") {
    rc.bc = BoundaryCondition::Neumann;
  } else {
    require(bcs == "dirichlet", "config: problem.bc must be \"dirichlet\" or \"neumann\"");
    rc.bc = BoundaryCondition::Dirichlet;
  }
  rc.cc.bc = rc.bc;

  rc.ell = d.real("problem.ell", 1.0);
  require(rc.ell > 0.0, "config: problem.ell must be positive");
  rc.cc.ell = rc.ell;
  rc.cc.ell_y = d.real("problem.ell_y", 1.0);
  require(rc.cc.ell_y > 0.0, "config: problem.ell_y must be positive");

  rc.cc.p = d.real("problem.p", 1.0);
  require(rc.cc.p > 0.0, "config: problem.p must be positive");
  rc.cc.c = d.real("problem.c", 0.0);
  require(rc.cc.c <= 0.0, "config: problem.c must be nonpositive");

  rc.p_expr = d.str("problem.p_expr", "");
  rc.c_expr = d.str("problem.c_expr", "");
  rc.p_file = d.str("problem.p_file", "");
  rc.c_file = d.str("problem.c_file", "");
  if (rc.closed_form)
    require(rc.p_expr.empty() && rc.c_expr.empty() && rc.p_file.empty() && rc.c_file.empty(),
            "config: closed-form problems take constant coefficients only");
  require(rc.p_expr.empty() || rc.p_file.empty(),
          "config: give problem.p_expr or problem.p_file, not both");
  require(rc.c_expr.empty() || rc.c_file.empty(),
          "config: give problem.c_expr or problem.c_file, not both");
  if (!rc.p_expr.empty()) Expression::parse(rc.p_expr);  // syntax errors surface at load time
  if (!rc.c_expr.empty()) Expression::parse(rc.c_expr);

  rc.mesh_size = static_cast<int>(d.integer("problem.mesh_size", 256));
  require(rc.mesh_size >= 8, "config: problem.mesh_size must be at least 8");
  rc.cc.mesh_size = rc.mesh_size;
  rc.modes = static_cast<int>(d.integer("problem.modes", 60));
  require(rc.modes >= 1, "config: problem.modes must be at least 1");

  const std::string init = d.str("initial.kind", "dirac");
  if (init == "dirac") {
    rc.initial = InitialKind::Dirac;
  } else if (init == "expr") {
    rc.initial = InitialKind::Expr;
  } else if (init == "file") {
    rc.initial = InitialKind::File;
  } else {
    throw PreconditionError("config: initial.kind must be \"dirac\", \"expr\" or \"file\"");
  }
  rc.initial_expr = d.str("initial.expr", "");
  rc.initial_file = d.str("initial.file", "");
  if (rc.initial == InitialKind::Expr) {
    require(!rc.initial_expr.empty(), "config: initial.kind = \"expr\" needs initial.expr");
    Expression::parse(rc.initial_expr);
  }
  if (rc.initial == InitialKind::File)
    require(!rc.initial_file.empty(), "config: initial.kind = \"file\" needs initial.file");

  const bool has_orders = d.has("model.orders");
  const bool has_weights = d.has("model.weights");
  require(has_orders == has_weights, "config: model.orders and model.weights go together");
  if (has_orders) {
    rc.model = make_model(d.reals("model.orders"), d.reals("model.weights"));
    rc.has_model = true;
  }

  rc.x0 = d.real("observation.x0", 0.0);
  rc.forward.time_grid.t0 = d.real("observation.t0", rc.forward.time_grid.t0);
  rc.forward.time_grid.t_max = d.real("observation.t_max", rc.forward.time_grid.t_max);
  rc.forward.time_grid.points =
      static_cast<int>(d.integer("observation.samples", rc.forward.time_grid.points));
  rc.forward.time_grid.geometric = d.boolean("observation.geometric", true);

  rc.forward.mode_count = static_cast<int>(d.integer("forward.mode_count", rc.modes));
  rc.forward.mode_tail_tol = d.real("forward.mode_tail_tol", rc.forward.mode_tail_tol);
  rc.forward.validate();

  rc.noise_level = d.real("synth.noise_level", 0.0);
  require(rc.noise_level >= 0.0, "config: synth.noise_level must be nonnegative");
  const long long seed = d.integer("synth.seed", 0);
  require(seed >= 0, "config: synth.seed must be nonnegative");
  rc.seed = static_cast<std::uint64_t>(seed);

  rc.inverse.n_max = static_cast<int>(d.integer("inverse.n_max", rc.inverse.n_max));
  rc.inverse.pk_terms = static_cast<int>(d.integer("inverse.pk_terms", rc.inverse.pk_terms));
  rc.inverse.eta_grid = d.reals("inverse.eta_grid", {});
  const long long iseed = d.integer("inverse.seed", 0);
  require(iseed >= 0, "config: inverse.seed must be nonnegative");
  rc.inverse.seed = static_cast<std::uint64_t>(iseed);
  rc.inverse.order_select.residual_drop_threshold =
      d.real("inverse.residual_drop_threshold", rc.inverse.order_select.residual_drop_threshold);
  rc.inverse.lsq.max_iter = static_cast<int>(d.integer("inverse.lsq.max_iter", rc.inverse.lsq.max_iter));
  rc.inverse.lsq.step_tol = d.real("inverse.lsq.step_tol", rc.inverse.lsq.step_tol);
  rc.inverse.lsq.residual_tol = d.real("inverse.lsq.residual_tol", rc.inverse.lsq.residual_tol);
  rc.inverse.lsq.damping_init = d.real("inverse.lsq.damping_init", rc.inverse.lsq.damping_init);
  rc.inverse.validate();

  const bool has_list = d.has("laplace.etas");
  const bool has_range =
      d.has("laplace.eta_min") || d.has("laplace.eta_max") || d.has("laplace.points");
  require(!(has_list && has_range),
          "config: give laplace.etas or the eta_min/eta_max/points range, not both");
  if (has_list) {
    rc.laplace_etas = d.reals("laplace.etas");
    require(!rc.laplace_etas.empty(), "config: laplace.etas must be nonempty");
    for (double eta : rc.laplace_etas)
      require(eta > 0.0, "config: laplace.etas entries must be positive");
  } else if (has_range) {
    const double lo = d.real("laplace.eta_min", 0.05);
    const double hi = d.real("laplace.eta_max", 2.0);
    const long long pts = d.integer("laplace.points", 64);
    require(lo > 0.0 && hi > lo, "config: need 0 < laplace.eta_min < laplace.eta_max");
    require(pts >= 2, "config: laplace.points must be at least 2");
    rc.laplace_etas.resize(static_cast<std::size_t>(pts));
    const double step = std::log(hi / lo) / static_cast<double>(pts - 1);
    for (long long k = 0; k < pts; ++k)
      rc.laplace_etas[static_cast<std::size_t>(k)] = lo * std::exp(step * static_cast<double>(k));
    rc.laplace_etas.back() = hi;
  }

  return rc;
}

RunConfig RunConfig::load(const std::string& path) { return from_doc(ConfigDoc::load(path)); }

}  // namespace fracorder
